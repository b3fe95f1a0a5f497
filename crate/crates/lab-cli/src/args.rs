//! Flag parsing with config-file defaults.
//!
//! Flags are `--name value` pairs. A `--config file` of `key = value` lines
//! supplies defaults that explicit flags override. Unknown keys are
//! rejected so typos surface as validation errors.

use std::collections::BTreeMap;

use lab_core::{LabError, Result};

#[derive(Debug, Clone)]
pub struct Args {
    pub command: String,
    flags: BTreeMap<String, String>,
    consumed: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl Args {
    pub fn parse(argv: &[String]) -> Result<Args> {
        if argv.is_empty() {
            return Err(LabError::invalid("command", "missing subcommand"));
        }
        let command = argv[0].clone();
        let mut flags = BTreeMap::new();
        let mut i = 1;
        while i < argv.len() {
            let key = argv[i]
                .strip_prefix("--")
                .ok_or_else(|| LabError::invalid("argv", format!("expected --flag, got `{}`", argv[i])))?
                .to_string();
            let value = argv
                .get(i + 1)
                .ok_or_else(|| LabError::invalid("argv", format!("flag --{key} needs a value")))?
                .clone();
            flags.insert(key, value);
            i += 2;
        }
        // Config file defaults (never overriding explicit flags).
        if let Some(path) = flags.get("config").cloned() {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| LabError::invalid("config", format!("cannot read {path}: {e}")))?;
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| LabError::invalid("config", format!("expected key = value, got `{line}`")))?;
                flags.entry(k.trim().to_string()).or_insert_with(|| v.trim().to_string());
            }
        }
        let args = Args {
            command,
            flags,
            consumed: Default::default(),
        };
        args.consumed.borrow_mut().insert("config".into());
        Ok(args)
    }

    fn raw(&self, key: &str) -> Option<&String> {
        self.consumed.borrow_mut().insert(key.to_string());
        self.flags.get(key)
    }

    pub fn string(&self, key: &str) -> Option<String> {
        self.raw(key).cloned()
    }

    pub fn require(&self, key: &'static str) -> Result<String> {
        self.string(key)
            .ok_or_else(|| LabError::invalid(key, "required flag missing"))
    }

    pub fn f64_or(&self, key: &'static str, default: f64) -> Result<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| LabError::invalid(key, format!("`{v}` is not a number"))),
        }
    }

    pub fn f64_req(&self, key: &'static str) -> Result<f64> {
        let v = self.require(key)?;
        v.parse()
            .map_err(|_| LabError::invalid(key, format!("`{v}` is not a number")))
    }

    pub fn usize_or(&self, key: &'static str, default: usize) -> Result<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| LabError::invalid(key, format!("`{v}` is not an integer"))),
        }
    }

    pub fn u64_or(&self, key: &'static str, default: u64) -> Result<u64> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| LabError::invalid(key, format!("`{v}` is not an integer"))),
        }
    }

    /// Comma-separated f64 list.
    pub fn f64_list(&self, key: &'static str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| LabError::invalid(key, format!("`{p}` is not a number")))
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some),
        }
    }

    /// Threads: flag, then LAB_THREADS, then 1.
    pub fn threads(&self) -> Result<usize> {
        if let Some(v) = self.raw("threads") {
            return v
                .parse()
                .map_err(|_| LabError::invalid("threads", format!("`{v}` is not an integer")));
        }
        match std::env::var("LAB_THREADS") {
            Ok(v) => v
                .parse()
                .map_err(|_| LabError::invalid("threads", format!("LAB_THREADS=`{v}` is not an integer"))),
            Err(_) => Ok(1),
        }
    }

    /// Rejects flags no branch consumed.
    pub fn finish(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        for key in self.flags.keys() {
            if !consumed.contains(key) {
                return Err(LabError::invalid("argv", format!("unknown flag --{key}")));
            }
        }
        Ok(())
    }
}
