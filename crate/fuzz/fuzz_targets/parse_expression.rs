#![no_main]

use libfuzzer_sys::fuzz_target;
use tsdyn::model::parse_expression;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(tree) = parse_expression(src) {
        // printing and reparsing must give the same tree
        let again = parse_expression(&tree.to_string()).expect("printed trees reparse");
        assert_eq!(tree, again);
    }
});
