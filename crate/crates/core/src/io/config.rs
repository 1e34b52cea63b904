use super::IoError;
use std::collections::BTreeMap;
use std::str::FromStr;

/// A flat `key = value` file. Later keys override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

pub fn parse_config(text: &str) -> Result<Config, IoError> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| IoError::Config {
            line: i + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(IoError::Config {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        entries.insert(k.to_string(), v.trim().to_string());
    }
    Ok(Config { entries })
}

impl Config {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Typed lookup; a present but unparsable value is an error.
    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, IoError> {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|_| IoError::Invalid(format!("config key `{key}`: cannot parse `{v}`")))
            })
            .transpose()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_files() {
        let c = parse_config("# loop\nbudget = 5\n\nrounds=3\nacq = entropy # not a comment\n").unwrap();
        assert_eq!(c.parse::<f64>("budget").unwrap(), Some(5.0));
        assert_eq!(c.parse::<usize>("rounds").unwrap(), Some(3));
        assert_eq!(c.get("acq"), Some("entropy # not a comment"));
        assert_eq!(c.parse::<usize>("missing").unwrap(), None);
        assert!(c.parse::<usize>("acq").is_err());
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(matches!(parse_config("a = 1\nnonsense\n"), Err(IoError::Config { line: 2, .. })));
        assert!(matches!(parse_config(" = 3"), Err(IoError::Config { line: 1, .. })));
    }
}

/// Keys understood by [`Config::apply_exec`] and [`Config::apply_loop`].
pub const CONFIG_KEYS: &[&str] = &[
    "acq",
    "budget",
    "epochs",
    "finetune_epochs",
    "frag_fraction",
    "granularity",
    "iters",
    "learning_rate",
    "max_region",
    "offset",
    "preview",
    "radius",
    "rounds",
    "roi_size",
    "samples",
    "seed",
    "self_train",
    "sigma",
    "source_replay",
    "thresh",
    "vary_phrasing",
];

impl Config {
    /// Fails on keys nothing reads, which are usually typos.
    pub fn check_keys(&self) -> Result<(), IoError> {
        match self.entries.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            Some(k) => Err(IoError::Invalid(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn apply_exec(&self, cfg: &mut crate::exec::ExecConfig) -> Result<(), IoError> {
        if let Some(v) = self.parse("granularity")? {
            cfg.refine.cluster.granularity = v;
        }
        if let Some(v) = self.parse("max_region")? {
            cfg.refine.cluster.max_region_fraction = v;
        }
        if let Some(v) = self.parse("samples")? {
            cfg.refine.sample_percent = v;
        }
        if let Some(v) = self.parse("offset")? {
            cfg.refine.offset = v;
        }
        if let Some(v) = self.parse("iters")? {
            cfg.refine.max_iters = v;
        }
        if let Some(v) = self.parse("radius")? {
            cfg.fill_radius = v;
        }
        if let Some(v) = self.parse("sigma")? {
            cfg.smooth_sigma = v;
        }
        if let Some(v) = self.parse("thresh")? {
            cfg.smooth_thresh = v;
        }
        if let Some(v) = self.parse("frag_fraction")? {
            cfg.frag_fraction = v;
        }
        Ok(())
    }

    pub fn apply_loop(&self, cfg: &mut crate::adapt::LoopConfig) -> Result<(), IoError> {
        use crate::adapt::AcquisitionKind;
        self.apply_exec(&mut cfg.exec)?;
        if let Some(v) = self.parse("budget")? {
            cfg.plan.budget_percent = v;
        }
        if let Some(v) = self.parse("rounds")? {
            cfg.plan.rounds = v;
        }
        if let Some(v) = self.parse::<usize>("roi_size")? {
            cfg.plan.roi_w = v;
            cfg.plan.roi_h = v;
        }
        match self.get("acq") {
            Some("entropy") => cfg.acquisition = AcquisitionKind::Entropy,
            Some("random") => cfg.acquisition = AcquisitionKind::Random,
            Some(other) => return Err(IoError::Invalid(format!("config key `acq`: unknown strategy `{other}`"))),
            None => {}
        }
        if let Some(v) = self.parse("seed")? {
            cfg.seed = v;
        }
        if let Some(v) = self.parse("self_train")? {
            cfg.self_train = v;
        }
        if let Some(v) = self.parse("source_replay")? {
            cfg.source_replay = v;
        }
        if let Some(v) = self.parse("epochs")? {
            cfg.source_train.epochs = v;
        }
        if let Some(v) = self.parse("finetune_epochs")? {
            cfg.finetune.epochs = v;
        }
        if let Some(v) = self.parse("learning_rate")? {
            cfg.source_train.learning_rate = v;
        }
        if let Some(v) = self.parse("preview")? {
            cfg.feedback.preview = v;
        }
        if let Some(v) = self.parse("vary_phrasing")? {
            cfg.feedback.vary_phrasing = v;
        }
        Ok(())
    }
}
