//! Solver settings: built-in defaults from the checked-in config file, with
//! optional per-run overrides from `--config`.

use ccmp_core::benders::{BendersConfig, Variant};
use ccmp_core::formulate::LinearizationBounds;
use std::collections::BTreeMap;
use std::path::Path;

const DEFAULTS: &str = include_str!("../../../config/defaults.conf");

#[derive(Debug, Clone)]
pub struct Settings {
    pub time_limit_sec: f64,
    pub master_gap: f64,
    pub opt_tol: f64,
    pub sub_gap: f64,
    pub init_gap: f64,
    pub init_time_cap_sec: f64,
    pub big_m: f64,
    pub small_m: f64,
    pub mccormick_bound: f64,
    pub lb_floor: f64,
    pub iter_limit: usize,
    pub oracle_cap: usize,
}

fn parse_kv(text: &str, source: &str) -> Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("{source}:{}: expected 'key = value'", i + 1));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl Settings {
    pub fn load(config_path: Option<&Path>) -> Result<Self, String> {
        let mut map = parse_kv(DEFAULTS, "builtin defaults")?;
        if let Some(p) = config_path {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            for (k, v) in parse_kv(&text, &p.display().to_string())? {
                if !map.contains_key(&k) {
                    return Err(format!("{}: unknown setting '{k}'", p.display()));
                }
                map.insert(k, v);
            }
        }
        let f = |k: &str| -> Result<f64, String> {
            map[k].parse::<f64>().map_err(|e| format!("setting {k}: {e}"))
        };
        let u = |k: &str| -> Result<usize, String> {
            map[k].parse::<usize>().map_err(|e| format!("setting {k}: {e}"))
        };
        Ok(Settings {
            time_limit_sec: f("time_limit_sec")?,
            master_gap: f("master_gap")?,
            opt_tol: f("opt_tol")?,
            sub_gap: f("sub_gap")?,
            init_gap: f("init_gap")?,
            init_time_cap_sec: f("init_time_cap_sec")?,
            big_m: f("big_m")?,
            small_m: f("small_m")?,
            mccormick_bound: f("mccormick_bound")?,
            lb_floor: f("lb_floor")?,
            iter_limit: u("iter_limit")?,
            oracle_cap: u("oracle_cap")?,
        })
    }

    pub fn benders_config(&self, variant: Variant) -> BendersConfig {
        BendersConfig {
            variant,
            master_gap: self.master_gap,
            sub_gap: self.sub_gap,
            init_gap: self.init_gap,
            init_time_cap: self.init_time_cap_sec,
            time_limit: self.time_limit_sec,
            small_m: self.small_m,
            big_m: self.big_m,
            bounds: LinearizationBounds::with_fallback(self.mccormick_bound),
            opt_tol: self.opt_tol,
            lb_floor: self.lb_floor,
            iter_limit: self.iter_limit,
            eta_floor: None,
        }
    }
}
