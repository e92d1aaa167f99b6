#![no_main]
use libfuzzer_sys::fuzz_target;
use nilm_core::data::{parse_series_csv, series_csv_string};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(ch) = parse_series_csv("fuzz", text) {
        let again = parse_series_csv("fuzz", &series_csv_string(&ch)).expect("re-parse");
        assert_eq!(again.timestamps(), ch.timestamps());
        assert_eq!(again.watts(), ch.watts());
    }
});
