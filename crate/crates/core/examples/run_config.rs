//! Loads a run configuration from TOML with partial overrides and prints the
//! effective settings.

use covdetect::config::RunConfig;

fn main() -> covdetect::Result<()> {
    let text = r#"
seed = 42
denoise_sigma = 0.1

[arch]
base_channels = 4

[train]
epochs = 5
lr = 1e-3

[method]
method = "augmented"
k = 4
"#;
    let mut cfg = RunConfig::from_toml(text)?;
    cfg.apply_seed(cfg.seed);
    cfg.validate()?;
    println!("{}", cfg.to_toml());

    match RunConfig::from_toml("[train]\nepoch = 5\n") {
        Ok(_) => println!("typo accepted?"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
