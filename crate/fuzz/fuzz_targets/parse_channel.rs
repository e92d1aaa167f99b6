#![no_main]
use libfuzzer_sys::fuzz_target;
use nilm_core::data::parse_channel;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    if let Ok(ch) = parse_channel("fuzz", &text) {
        assert!(ch.timestamps().windows(2).all(|w| w[0] < w[1]));
        assert!(ch.watts().iter().all(|w| w.is_finite() && *w >= 0.0));
    }
});
