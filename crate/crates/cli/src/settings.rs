//! Layered `key=value` settings: `--config` file first, then `--set`
//! overrides, then the explicit flags of each subcommand.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pixrec::data::{CornersConfig, GlyphSrConfig, Split};
use pixrec::model::{parse_kv, ModelConfig};
use pixrec::sampler::{Mode, SamplePlan};
use pixrec::train::TrainConfig;
use serde::Serialize;

/// Settings outside the model and `train.*` keys.
pub const KNOWN: &[&str] = &[
    "data.task",
    "data.canvas",
    "data.digit_size",
    "data.input_size",
    "data.levels",
    "data.hr_size",
    "data.factor",
    "data.count",
    "data.seed",
    "data.sources",
    "data.split",
    "sample.greedy",
    "sample.tau",
    "sample.seed",
    "sample.num_samples",
    "sample.limit",
];

#[derive(Default)]
pub struct Settings {
    kv: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(config: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut kv = match config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                parse_kv(&text)?
            }
            None => BTreeMap::new(),
        };
        for s in sets {
            let (k, v) = s.split_once('=').with_context(|| format!("--set {s}: expected key=value"))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self { kv })
    }

    pub fn put(&mut self, key: &str, value: Option<impl ToString>) {
        if let Some(v) = value {
            self.kv.insert(key.to_string(), v.to_string());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.kv.get(key).map(String::as_str)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            Some(v) => v.parse().map_err(|_| anyhow::anyhow!("invalid value {v:?} for {key}")),
            None => Ok(default),
        }
    }

    /// Fails on keys that are neither model keys nor listed in [`KNOWN`].
    /// One file can configure every subcommand; each reads what it needs.
    pub fn reject_unknown(&self) -> Result<()> {
        let rest: BTreeMap<String, String> = ModelConfig::default()
            .apply(&self.kv)?
            .into_iter()
            .map(|k| (k.clone(), self.kv[&k].clone()))
            .collect();
        for k in TrainConfig::default().apply(&rest)? {
            if !KNOWN.contains(&k.as_str()) {
                bail!("unknown setting {k}");
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelConfig> {
        let mut m = ModelConfig::default();
        m.apply(&self.kv)?;
        m.validate()?;
        Ok(m)
    }

    pub fn train(&self, default_objective: pixrec::model::Objective) -> Result<TrainConfig> {
        let mut t = TrainConfig {
            objective: default_objective,
            ..TrainConfig::default()
        };
        t.apply(&self.kv)?;
        t.validate()?;
        Ok(t)
    }

    pub fn sample_plan(&self) -> Result<SamplePlan> {
        let greedy: bool = self.parse("sample.greedy", false)?;
        let plan = SamplePlan {
            mode: if greedy {
                Mode::Greedy
            } else {
                Mode::Tempered(self.parse("sample.tau", 0.9)?)
            },
            seed: self.parse("sample.seed", 0)?,
            num_samples: self.parse("sample.num_samples", 1)?,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn limit(&self) -> Result<usize> {
        self.parse("sample.limit", usize::MAX)
    }

    pub fn corners(&self) -> Result<CornersConfig> {
        let d = CornersConfig::default();
        let c = CornersConfig {
            canvas: self.parse("data.canvas", d.canvas)?,
            digit_size: self.parse("data.digit_size", d.digit_size)?,
            input_size: self.parse("data.input_size", d.input_size)?,
            levels: self.parse("data.levels", d.levels)?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn glyph_sr(&self) -> Result<GlyphSrConfig> {
        let d = GlyphSrConfig::default();
        Ok(GlyphSrConfig {
            hr_size: self.parse("data.hr_size", d.hr_size)?,
            factor: self.parse("data.factor", d.factor)?,
            levels: self.parse("data.levels", d.levels)?,
        })
    }

    pub fn data_count(&self) -> Result<usize> {
        self.parse("data.count", 1000)
    }

    pub fn data_seed(&self) -> Result<u64> {
        self.parse("data.seed", 0)
    }

    pub fn data_sources(&self) -> Result<usize> {
        self.parse("data.sources", 500)
    }

    pub fn task(&self) -> &str {
        self.get("data.task").unwrap_or("corners")
    }

    pub fn split(&self) -> Result<Split> {
        Ok(match self.get("data.split").unwrap_or("train") {
            "train" => Split::Train,
            "valid" => Split::Valid,
            "test" => Split::Test,
            s => bail!("unknown split {s}"),
        })
    }

    pub fn levels(&self, default: usize) -> Result<usize> {
        self.parse("levels", default)
    }

    pub fn text(&self) -> String {
        self.kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// Written as `run.json` next to every run's outputs.
#[derive(Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub args: Vec<String>,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub version: &'static str,
    pub git_rev: &'static str,
}

pub fn write_manifest(dir: &Path, command: &str, seed: u64, config_text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let m = RunManifest {
        command,
        args: std::env::args().collect(),
        seed,
        config: parse_kv(config_text)?,
        version: env!("CARGO_PKG_VERSION"),
        git_rev: env!("PIXREC_GIT_REV"),
    };
    fs::write(dir.join("run.json"), serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(())
}
