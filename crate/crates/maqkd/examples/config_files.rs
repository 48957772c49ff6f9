//! Round-trips a configuration through the key-value file format and
//! shows how partial files override the built-in defaults.
//!
//! ```bash
//! cargo run --example config_files
//! ```

use maqkd::model::{load_config, SystemConfig};
use maqkd::PAPER_DEFAULTS_TEXT;

fn main() {
    // The bundled defaults file parses to exactly the built-in defaults.
    let from_file = load_config(PAPER_DEFAULTS_TEXT).unwrap();
    assert_eq!(from_file, SystemConfig::paper_defaults());

    // A partial file: unspecified keys keep their defaults.
    let custom = load_config(
        "memory.t2_s = 0.5\n\
         channel.att_length_km = 0.2   # high-loss fiber\n\
         protocol.num_modules = 25\n",
    )
    .unwrap();
    assert_eq!(custom.memory.t2_dephasing, 0.5);
    assert_eq!(custom.channel.att_length, 200.0);
    assert_eq!(custom.bsm.ideality, 0.98); // default retained

    // Serialization round-trips bit-exactly.
    let text = custom.to_config_text();
    assert_eq!(load_config(&text).unwrap(), custom);
    println!("{text}");

    // Out-of-range values are rejected with the offending field named.
    let err = load_config("memory.eta_prep = 1.5").unwrap_err();
    println!("rejected as expected: {err}");
}
