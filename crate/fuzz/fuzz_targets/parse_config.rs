#![no_main]

use libfuzzer_sys::fuzz_target;
use tsdyn_cli::config::parse;
use tsdyn_cli::{Command, Overrides};

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    let _ = parse(src, Command::Check, &Overrides::default());
});
