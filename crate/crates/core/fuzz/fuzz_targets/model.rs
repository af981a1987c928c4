#![no_main]

use gapdrive::neural::ModelFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(model) = ModelFile::from_json(data) {
        let arch = model.online.architecture();
        let stat = vec![0.5; arch.static_dim];
        let gap = vec![0.0; arch.gap_dim];
        let rows = [[0.1, -0.2, 1.0], [-0.5, 0.3, 0.0]];
        let _ = model.online.forward(&rows, &stat, &gap);
    }
});
