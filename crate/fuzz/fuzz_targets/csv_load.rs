//! Fuzzes the CSV ingestion path: arbitrary bytes, arbitrary declared column
//! counts, with and without a header row. Must never panic; errors are fine.

#![no_main]

use libfuzzer_sys::fuzz_target;

use adacat::datasets::parse_csv_str;

fuzz_target!(|data: &[u8]| {
    if data.is_empty() {
        return;
    }
    let dims = (data[0] % 8) as usize;
    let header = data[0] & 0x80 != 0;
    if let Ok(text) = std::str::from_utf8(&data[1..]) {
        if let Ok(ds) = parse_csv_str(text, dims.max(1), header) {
            // accepted data must already be scaled into the unit cube
            for row in &ds.samples {
                for &v in row {
                    assert!((0.0..1.0).contains(&v));
                }
            }
        }
    }
});
