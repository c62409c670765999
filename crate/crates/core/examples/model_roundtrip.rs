//! Saves a model to the binary container and reads it back.

use pitchkin::tcn::{read_model, write_model, Task, TcnConfig, TcnModel};

fn main() {
    let model = TcnModel::new(TcnConfig::new(Task::Position).with_seed(11)).unwrap();
    let mut bytes = Vec::new();
    write_model(&model, &mut bytes).unwrap();
    let back = read_model(&mut bytes.as_slice()).unwrap();
    let mut again = Vec::new();
    write_model(&back, &mut again).unwrap();
    println!(
        "{} parameters, {} bytes, magic {:?}, identical after reload: {}",
        model.num_parameters(),
        bytes.len(),
        std::str::from_utf8(&bytes[..4]).unwrap(),
        back == model && again == bytes
    );
    let truncated = read_model(&mut &bytes[..bytes.len() / 2]);
    println!("truncated file: {}", truncated.unwrap_err());
}
