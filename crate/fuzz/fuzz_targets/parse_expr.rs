#![no_main]

use freetrans::expr::parse_expr;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(e) = parse_expr(src) {
        // Evaluation is total: NaN and infinities are fine, panics are not.
        for p in [[0.0, 0.0], [-1.0, 0.5], [1e300, -1e-300]] {
            let _ = e.eval(p);
        }
    }
});
