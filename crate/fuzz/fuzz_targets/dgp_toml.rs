#![no_main]

use libfuzzer_sys::fuzz_target;
use stagdid::synth::generate_panel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(spec) = stagdid::io::parse_dgp(text) else {
        return;
    };
    // only generate panels small enough to stay fast
    if spec.validate().is_ok() && spec.n_units.saturating_mul(spec.periods) <= 10_000 {
        let _ = generate_panel(&spec);
    }
});
