#![no_main]

use libfuzzer_sys::fuzz_target;
use stagdid::costbenefit::{cost_benefit, AttProfile, CbConstants, PriceIndex};

fuzz_target!(|data: &[u8]| {
    let Ok(inputs) = stagdid::io::read_cb_inputs(data) else {
        return;
    };
    let prices = PriceIndex((1990..2040).map(|y| (y, 100.0)).collect());
    let c = CbConstants::with_defaults(5.0, prices);
    let att = AttProfile::Uniform {
        emissions: -0.04,
        jobs: 0.03,
    };
    let _ = cost_benefit(&inputs, &att, &c);
});
