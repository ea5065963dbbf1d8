//! File configuration. Command-line flags override these values, which
//! override the built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;
use stagger::matheuristic::{LocalSearchConfig, MatheuristicConfig};
use stagger::network::{ScenarioParams, SyntheticParams};
use stagger::online::DEFAULT_EPOCH_LENGTH;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub solver: SolverSection,
    pub online: OnlineSection,
    pub scenario: Option<ScenarioParams>,
    pub synthetic: SyntheticParams,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub time_limit: f64,
    pub milp_slice: f64,
    pub passes: usize,
    pub use_milp: bool,
    pub ls_on_incumbent: bool,
    pub exact_delay: bool,
    pub incremental_queue: bool,
    pub max_pops: usize,
    /// Adapter descriptor; relative paths resolve against the config file.
    pub adapter: Option<PathBuf>,
    pub workdir: Option<PathBuf>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let m = MatheuristicConfig::default();
        SolverSection {
            time_limit: m.time_limit,
            milp_slice: m.milp_slice,
            passes: m.passes,
            use_milp: m.use_milp,
            ls_on_incumbent: m.ls_on_incumbent,
            exact_delay: m.exact_delay,
            incremental_queue: m.local_search.incremental_queue,
            max_pops: m.local_search.max_pops,
            adapter: None,
            workdir: None,
        }
    }
}

impl SolverSection {
    pub fn matheuristic(&self) -> MatheuristicConfig {
        MatheuristicConfig {
            time_limit: self.time_limit,
            milp_slice: self.milp_slice,
            passes: self.passes,
            use_milp: self.use_milp,
            ls_on_incumbent: self.ls_on_incumbent,
            exact_delay: self.exact_delay,
            local_search: LocalSearchConfig {
                max_pops: self.max_pops,
                incremental_queue: self.incremental_queue,
            },
            workdir: self.workdir.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineSection {
    pub epoch_length: f64,
    /// Per-epoch time limit; the epoch length when unset.
    pub epoch_time_limit: Option<f64>,
}

impl Default for OnlineSection {
    fn default() -> Self {
        OnlineSection {
            epoch_length: DEFAULT_EPOCH_LENGTH,
            epoch_time_limit: None,
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: FileConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(a) = &cfg.solver.adapter {
            if a.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.solver.adapter = Some(base.join(a));
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_default_and_override() {
        let cfg: FileConfig = toml::from_str(
            r#"
seed = 7
[solver]
time_limit = 5.0
[online]
epoch_length = 120.0
[synthetic]
rows = 3
"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.solver.time_limit, 5.0);
        assert_eq!(cfg.solver.milp_slice, MatheuristicConfig::default().milp_slice);
        assert_eq!(cfg.online.epoch_length, 120.0);
        assert_eq!(cfg.synthetic.rows, 3);
        assert!(toml::from_str::<FileConfig>("[solver]\nbogus = 1\n").is_err());
    }

    #[test]
    fn shipped_example_parses() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
        let cfg = FileConfig::load(Some(&path)).unwrap();
        assert!(cfg.solver.adapter.unwrap().ends_with("configs/highs.toml"));
        assert_eq!(cfg.scenario.unwrap().capacity_divisor, 15.0);
    }
}
