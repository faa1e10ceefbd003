#![no_main]

use libfuzzer_sys::fuzz_target;
use tsdyn::model::parse_expression;

fuzz_target!(|data: &[u8]| {
    // first 8 bytes pick t, the rest is the expression
    if data.len() < 8 {
        return;
    }
    let t = f64::from_le_bytes(data[..8].try_into().unwrap());
    let Ok(src) = std::str::from_utf8(&data[8..]) else {
        return;
    };
    if let Ok(tree) = parse_expression(src) {
        let x = [0.5, 2.0, 1e-6, 3.0];
        if tree.max_variable() <= x.len() {
            let _ = tree.eval(t, &x);
        }
    }
});
