//! Aggregate configuration read from one `key = value` file.

use std::path::Path;

use crate::baseline::BasicGains;
use crate::env::EnvConfig;
use crate::error::Result;
use crate::kv::KvMap;
use crate::ppo::PpoConfig;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub env: EnvConfig,
    pub basic: BasicGains,
    pub ppo: PpoConfig,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KvMap::parse(text)?;
        let mut cfg = Self::default();
        cfg.env.read_kv(&mut kv)?;
        cfg.basic.read_kv(&mut kv)?;
        cfg.ppo.read_kv(&mut kv)?;
        kv.finish()?;
        cfg.env.validate()?;
        cfg.basic.validate()?;
        cfg.ppo.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::from_file(p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        self.env.write_kv(&mut out);
        self.basic.write_kv(&mut out);
        self.ppo.write_kv(&mut out);
        out
    }
}
