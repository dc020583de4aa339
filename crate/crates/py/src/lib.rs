//! Python bindings. Structured values cross the boundary as JSON strings in
//! the same wire format the service uses.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use simulacra_core::character::{self, AttributePools, CharacterProfile, TraitPool};
use simulacra_core::conformity::{run_experiment, Condition, TrialSuite};
use simulacra_core::eval::{self, PointScheme, Questionnaire, RatingsMatrix};
use simulacra_core::llm::{Gateway, ProviderConfig, TemplateLibrary};
use simulacra_core::simulacrum::{PromptSimulacrum, Simulacrum};
use simulacra_core::story::{self, AutoApprove, ForgeConfig};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: DeserializeOwned>(what: &str, json: &str) -> PyResult<T> {
    serde_json::from_str(json).map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn dump<T: Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(err)
}

/// The mock gateway, or one built from a provider config given as JSON.
fn gateway(provider: Option<&str>) -> PyResult<Gateway> {
    match provider {
        None => Ok(Gateway::mock()),
        Some(json) => {
            let cfg: ProviderConfig = parse("provider config", json)?;
            Gateway::from_config(&cfg, TemplateLibrary::bundled()).map_err(err)
        }
    }
}

/// A profile sampled from the bundled pools, as JSON.
#[pyfunction]
fn sample_profile(seed: u64) -> PyResult<String> {
    dump(&character::sample_profile(&AttributePools::bundled(), &TraitPool::bundled(), seed).map_err(err)?)
}

/// Constraint violations of a profile; empty when it is valid.
#[pyfunction]
fn validate_profile(profile: &str) -> PyResult<Vec<String>> {
    let p: CharacterProfile = parse("profile", profile)?;
    Ok(character::validate_profile(&p, &AttributePools::bundled(), &TraitPool::bundled())
        .iter()
        .map(ToString::to_string)
        .collect())
}

#[pyfunction]
fn kendall_tau(a: Vec<i64>, b: Vec<i64>) -> PyResult<f64> {
    character::kendall_tau(&a, &b).map_err(err)
}

/// `{"l1", "tau", "tauNormalized", "total"}` for two profiles.
#[pyfunction]
fn character_distance(a: &str, b: &str) -> PyResult<String> {
    let (a, b): (CharacterProfile, CharacterProfile) = (parse("first profile", a)?, parse("second profile", b)?);
    dump(&character::character_distance(&a, &b))
}

/// Biography plus `iterations` auto-approved expansions, as life story JSON.
#[pyfunction]
#[pyo3(signature = (profile, seed, iterations = 5, provider = None))]
fn forge_story(profile: &str, seed: u64, iterations: usize, provider: Option<&str>) -> PyResult<String> {
    let p: CharacterProfile = parse("profile", profile)?;
    let config = ForgeConfig::default().with_iterations(iterations);
    dump(&story::forge_story(&p, &config, &gateway(provider)?, &mut AutoApprove, seed).map_err(err)?)
}

#[pyfunction]
fn generate_questionnaire(profile: &str, seed: u64) -> PyResult<String> {
    let p: CharacterProfile = parse("profile", profile)?;
    let q = eval::generate_questionnaire(
        &p,
        &AttributePools::bundled(),
        &TraitPool::bundled(),
        &PointScheme::default(),
        seed,
    )
    .map_err(err)?;
    dump(&q)
}

/// Scores one reply per questionnaire item.
#[pyfunction]
fn score_self_report(responses: Vec<String>, questionnaire: &str) -> PyResult<String> {
    let q: Questionnaire = parse("questionnaire", questionnaire)?;
    dump(&eval::score_self_report(&responses, &q).map_err(err)?)
}

/// Agreement of judges, one column of ratings per judge.
#[pyfunction]
fn compute_icc(columns: Vec<Vec<f64>>) -> PyResult<f64> {
    let m = RatingsMatrix::from_columns(&columns).map_err(err)?;
    eval::compute_icc(&m).map_err(err)
}

/// The line-judgement experiment over prompt-only simulacra of `profiles`.
#[pyfunction]
#[pyo3(signature = (profiles, condition = "group", scenario = None, interview = false, seed = 0, provider = None))]
fn conformity_experiment(
    profiles: Vec<String>,
    condition: &str,
    scenario: Option<String>,
    interview: bool,
    seed: u64,
    provider: Option<&str>,
) -> PyResult<String> {
    let condition: Condition = condition.parse().map_err(err)?;
    let gw = gateway(provider)?;
    let config = ForgeConfig::default();
    let mut participants = Vec::new();
    for json in &profiles {
        let p: CharacterProfile = parse("profile", json)?;
        let bio = story::generate_biography(&p, &gw, &config, seed).map_err(err)?;
        let sim = PromptSimulacrum::new(gw.clone(), p, &bio.text)
            .with_scenario(scenario.clone())
            .with_seed(seed);
        participants.push(Box::new(sim) as Box<dyn Simulacrum>);
    }
    let report = run_experiment(&mut participants, &TrialSuite::bundled(), gw.templates(), condition, interview)
        .map_err(err)?;
    dump(&report)
}

#[pymodule]
fn simulacra(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(sample_profile, m)?)?;
    m.add_function(wrap_pyfunction!(validate_profile, m)?)?;
    m.add_function(wrap_pyfunction!(kendall_tau, m)?)?;
    m.add_function(wrap_pyfunction!(character_distance, m)?)?;
    m.add_function(wrap_pyfunction!(forge_story, m)?)?;
    m.add_function(wrap_pyfunction!(generate_questionnaire, m)?)?;
    m.add_function(wrap_pyfunction!(score_self_report, m)?)?;
    m.add_function(wrap_pyfunction!(compute_icc, m)?)?;
    m.add_function(wrap_pyfunction!(conformity_experiment, m)?)?;
    Ok(())
}
