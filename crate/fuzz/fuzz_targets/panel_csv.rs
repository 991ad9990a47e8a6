#![no_main]

use libfuzzer_sys::fuzz_target;
use stagdid::panel::validate_panel;

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = stagdid::io::read_panel_csv(data) {
        // validation must reject bad records with an error, never a panic
        let _ = validate_panel(&records);
    }
});
