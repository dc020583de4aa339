//! Gateway construction from command line choices and project files.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use simulacra_core::llm::{Gateway, ProviderConfig, ProviderKind, TemplateLibrary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ProviderChoice {
    Remote,
    Mock,
}

/// Reads `provider.toml` (or `explicit`) for remote runs. The project's
/// `templates/` directory, when present, overrides bundled prompts.
pub fn gateway(project: &Path, choice: ProviderChoice, explicit: Option<&Path>) -> Result<Gateway> {
    let templates_dir = project.join("templates");
    let templates = if templates_dir.is_dir() {
        TemplateLibrary::with_overrides(&templates_dir)?
    } else {
        TemplateLibrary::bundled()
    };
    let config = match choice {
        ProviderChoice::Mock => ProviderConfig::mock(),
        ProviderChoice::Remote => {
            let path: PathBuf = explicit.map_or_else(|| project.join("provider.toml"), Path::to_path_buf);
            let raw = std::fs::read_to_string(&path)
                .with_context(|| format!("remote provider needs a config at {}", path.display()))?;
            let mut cfg: ProviderConfig = toml::from_str(&raw).with_context(|| format!("parsing {}", path.display()))?;
            cfg.kind = ProviderKind::RemoteApi;
            cfg
        }
    };
    Ok(Gateway::from_config(&config, templates)?)
}
