#![no_main]

use freetrans_core::io::{field_to_csv, parse_field_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(field) = parse_field_csv(text) {
        // Whatever parses must survive a write/read cycle bit for bit.
        let again = parse_field_csv(&field_to_csv(&field)).expect("written CSV parses");
        let same = field
            .values()
            .iter()
            .zip(again.values())
            .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        assert!(same && field.domain() == again.domain());
    }
});
