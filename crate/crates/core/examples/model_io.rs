//! Writes a model and a policy to JSON, reads them back, and shows the
//! error reported for a malformed model.

use double_disorder::{solve, ModelSpec, SolverConfig, StoppingPolicy};

fn main() -> anyhow::Result<()> {
    let dir = std::env::temp_dir().join("double-disorder-model-io");
    std::fs::create_dir_all(&dir)?;
    let model_path = dir.join("tiny.json");
    let policy_path = dir.join("policy.json");

    let spec = ModelSpec::tiny();
    std::fs::write(&model_path, spec.to_json_pretty())?;
    let loaded = ModelSpec::load(&model_path)?;
    assert_eq!(loaded, spec);
    println!("model digest: {}", loaded.digest());

    let policy = solve(&loaded, &SolverConfig::default())?;
    std::fs::write(&policy_path, policy.to_json_pretty())?;
    let back = StoppingPolicy::load(&policy_path)?;
    back.check_model(&loaded)?;
    println!("policy round trip ok: {}", back == policy);

    let broken = spec.to_json_pretty().replacen("0.9", "\"high\"", 1);
    if let Err(msg) = ModelSpec::from_json_str(&broken) {
        println!("malformed model: {msg}");
    }
    Ok(())
}
