//! Flat, typed key–value run configuration with sections per module.
//!
//! Format: `[section]` headers, `key = value` pairs, `#` comments, blank
//! lines. No nesting. Unknown sections or keys are errors (they are almost
//! always typos), and every diagnostic carries the line number and field
//! name. The documented schema ships in docs/CONFIG.md with examples under
//! configs/.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::cone::ScenarioSpec;
use crate::error::{Error, Result};
use crate::flow::{Method, RunOptions, StoreFields};
use crate::monitors::MonitorSlacks;
use crate::spectral::DiffMethod;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // [run]
    pub scenario: String,
    pub seed: u64,
    pub out_dir: String,
    pub threads: usize,
    pub store_fields: String, // "ends" | "all"
    // [grid]
    pub n: usize,
    pub m: usize,
    pub points_per_axis: usize,
    // [flow]
    pub method: String,
    pub t_max: f64,
    pub tol_converge: f64,
    pub record_interval: f64,
    pub dt0: f64,    // 0 = auto
    pub dt_max: f64, // 0 = none
    pub eig_floor_safety: f64,
    pub cfl_safety: f64,
    pub rkc_max_stages: usize,
    // [geometry]
    pub differentiator: String, // "spectral" | "fd4"
    pub mask_delta: f64,
    // [monitor]
    pub slack_max_principle: f64,
    pub slack_ratio_rel: f64,
    pub slack_sign: f64,
    pub slack_c0: f64,
    pub slack_monotone: f64,
    pub slack_conservation_rel: f64,
    // [stationary]
    pub solve_reference: bool,
    pub stationary_tol: f64,
    // [scenario] family parameters, forwarded verbatim
    pub scenario_params: BTreeMap<String, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: "strict".to_string(),
            seed: 42,
            out_dir: "runs/out".to_string(),
            threads: 0,
            store_fields: "ends".to_string(),
            n: 2,
            m: 1,
            points_per_axis: 64,
            method: "rk4".to_string(),
            t_max: 5.0,
            tol_converge: 1e-8,
            record_interval: 0.01,
            dt0: 0.0,
            dt_max: 0.0,
            eig_floor_safety: 0.5,
            cfl_safety: 0.9,
            rkc_max_stages: 64,
            differentiator: "spectral".to_string(),
            mask_delta: 1e-3,
            slack_max_principle: 1e-6,
            slack_ratio_rel: 1e-6,
            slack_sign: 1e-8,
            slack_c0: 1e-6,
            slack_monotone: 1e-8,
            slack_conservation_rel: 1e-6,
            solve_reference: true,
            stationary_tol: 1e-10,
            scenario_params: BTreeMap::new(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(
    raw: &str,
    line: usize,
    field: &str,
    kind: &str,
) -> Result<T> {
    raw.parse::<T>().map_err(|_| Error::Config {
        line: Some(line),
        field: Some(field.to_string()),
        what: format!("expected {kind}, got `{raw}`"),
    })
}

impl RunConfig {
    /// Parse the flat config text. Strict: unknown sections/keys error.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| Error::Config {
                    line: Some(line_no),
                    field: None,
                    what: "unterminated section header".to_string(),
                })?;
                section = name.trim().to_string();
                match section.as_str() {
                    "run" | "grid" | "flow" | "geometry" | "monitor" | "stationary"
                    | "scenario" => {}
                    other => {
                        return Err(Error::Config {
                            line: Some(line_no),
                            field: None,
                            what: format!("unknown section `[{other}]`"),
                        })
                    }
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: Some(line_no),
                field: None,
                what: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let field = format!("{section}.{key}");
            match (section.as_str(), key) {
                ("run", "scenario") => cfg.scenario = value.to_string(),
                ("run", "seed") => cfg.seed = parse_value(value, line_no, &field, "u64")?,
                ("run", "out_dir") => cfg.out_dir = value.to_string(),
                ("run", "threads") => cfg.threads = parse_value(value, line_no, &field, "usize")?,
                ("run", "store_fields") => cfg.store_fields = value.to_string(),
                ("grid", "n") => cfg.n = parse_value(value, line_no, &field, "usize")?,
                ("grid", "m") => cfg.m = parse_value(value, line_no, &field, "usize")?,
                ("grid", "points_per_axis") => {
                    cfg.points_per_axis = parse_value(value, line_no, &field, "usize")?
                }
                ("flow", "method") => cfg.method = value.to_string(),
                ("flow", "t_max") => cfg.t_max = parse_value(value, line_no, &field, "f64")?,
                ("flow", "tol_converge") => {
                    cfg.tol_converge = parse_value(value, line_no, &field, "f64")?
                }
                ("flow", "record_interval") => {
                    cfg.record_interval = parse_value(value, line_no, &field, "f64")?
                }
                ("flow", "dt0") => cfg.dt0 = parse_value(value, line_no, &field, "f64")?,
                ("flow", "dt_max") => cfg.dt_max = parse_value(value, line_no, &field, "f64")?,
                ("flow", "eig_floor_safety") => {
                    cfg.eig_floor_safety = parse_value(value, line_no, &field, "f64")?
                }
                ("flow", "cfl_safety") => {
                    cfg.cfl_safety = parse_value(value, line_no, &field, "f64")?
                }
                ("flow", "rkc_max_stages") => {
                    cfg.rkc_max_stages = parse_value(value, line_no, &field, "usize")?
                }
                ("geometry", "differentiator") => cfg.differentiator = value.to_string(),
                ("geometry", "mask_delta") => {
                    cfg.mask_delta = parse_value(value, line_no, &field, "f64")?
                }
                ("monitor", "slack_max_principle") => {
                    cfg.slack_max_principle = parse_value(value, line_no, &field, "f64")?
                }
                ("monitor", "slack_ratio_rel") => {
                    cfg.slack_ratio_rel = parse_value(value, line_no, &field, "f64")?
                }
                ("monitor", "slack_sign") => {
                    cfg.slack_sign = parse_value(value, line_no, &field, "f64")?
                }
                ("monitor", "slack_c0") => {
                    cfg.slack_c0 = parse_value(value, line_no, &field, "f64")?
                }
                ("monitor", "slack_monotone") => {
                    cfg.slack_monotone = parse_value(value, line_no, &field, "f64")?
                }
                ("monitor", "slack_conservation_rel") => {
                    cfg.slack_conservation_rel = parse_value(value, line_no, &field, "f64")?
                }
                ("stationary", "solve_reference") => {
                    cfg.solve_reference = parse_value(value, line_no, &field, "bool")?
                }
                ("stationary", "tol") => {
                    cfg.stationary_tol = parse_value(value, line_no, &field, "f64")?
                }
                ("scenario", k) => {
                    let v: f64 = parse_value(value, line_no, &field, "f64")?;
                    cfg.scenario_params.insert(k.to_string(), v);
                }
                (s, k) => {
                    return Err(Error::Config {
                        line: Some(line_no),
                        field: Some(format!("{s}.{k}")),
                        what: if s.is_empty() {
                            "key appears before any section header".to_string()
                        } else {
                            format!("unknown key `{k}` in section `[{s}]`")
                        },
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Contract checks with field-level diagnostics.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("flow.t_max", self.t_max),
            ("flow.tol_converge", self.tol_converge),
            ("flow.record_interval", self.record_interval),
            ("flow.eig_floor_safety", self.eig_floor_safety),
            ("flow.cfl_safety", self.cfl_safety),
            ("geometry.mask_delta", self.mask_delta),
            ("monitor.slack_max_principle", self.slack_max_principle),
            ("monitor.slack_ratio_rel", self.slack_ratio_rel),
            ("monitor.slack_sign", self.slack_sign),
            ("monitor.slack_c0", self.slack_c0),
            ("monitor.slack_monotone", self.slack_monotone),
            (
                "monitor.slack_conservation_rel",
                self.slack_conservation_rel,
            ),
            ("stationary.tol", self.stationary_tol),
        ];
        for (field, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config_field(
                    field,
                    format!("must be positive and finite, got {v}"),
                ));
            }
        }
        for (field, v) in [("flow.dt0", self.dt0), ("flow.dt_max", self.dt_max)] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::config_field(
                    field,
                    format!("must be >= 0 (0 means auto), got {v}"),
                ));
            }
        }
        if self.points_per_axis < 4 || self.points_per_axis % 2 != 0 {
            return Err(Error::config_field(
                "grid.points_per_axis",
                format!("must be even and >= 4, got {}", self.points_per_axis),
            ));
        }
        if !(1 <= self.m && self.m < self.n && self.n <= 4) {
            return Err(Error::config_field(
                "grid.m",
                format!("need 1 <= m < n <= 4, got m = {}, n = {}", self.m, self.n),
            ));
        }
        Method::parse(&self.method)
            .map_err(|e| Error::config_field("flow.method", e.to_string()))?;
        match self.differentiator.as_str() {
            "spectral" | "fd4" => {}
            other => {
                return Err(Error::config_field(
                    "geometry.differentiator",
                    format!("expected spectral or fd4, got `{other}`"),
                ))
            }
        }
        match self.store_fields.as_str() {
            "ends" | "all" => {}
            other => {
                return Err(Error::config_field(
                    "run.store_fields",
                    format!("expected ends or all, got `{other}`"),
                ))
            }
        }
        if self.rkc_max_stages < 3 {
            return Err(Error::config_field(
                "flow.rkc_max_stages",
                format!("must be >= 3, got {}", self.rkc_max_stages),
            ));
        }
        Ok(())
    }

    /// Canonical serialization; parse(to_config_string(c)) == c.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "scenario = {}", self.scenario);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out_dir = {}", self.out_dir);
        let _ = writeln!(s, "threads = {}", self.threads);
        let _ = writeln!(s, "store_fields = {}", self.store_fields);
        let _ = writeln!(s, "\n[grid]");
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "points_per_axis = {}", self.points_per_axis);
        let _ = writeln!(s, "\n[flow]");
        let _ = writeln!(s, "method = {}", self.method);
        let _ = writeln!(s, "t_max = {}", self.t_max);
        let _ = writeln!(s, "tol_converge = {}", self.tol_converge);
        let _ = writeln!(s, "record_interval = {}", self.record_interval);
        let _ = writeln!(s, "dt0 = {}", self.dt0);
        let _ = writeln!(s, "dt_max = {}", self.dt_max);
        let _ = writeln!(s, "eig_floor_safety = {}", self.eig_floor_safety);
        let _ = writeln!(s, "cfl_safety = {}", self.cfl_safety);
        let _ = writeln!(s, "rkc_max_stages = {}", self.rkc_max_stages);
        let _ = writeln!(s, "\n[geometry]");
        let _ = writeln!(s, "differentiator = {}", self.differentiator);
        let _ = writeln!(s, "mask_delta = {}", self.mask_delta);
        let _ = writeln!(s, "\n[monitor]");
        let _ = writeln!(s, "slack_max_principle = {}", self.slack_max_principle);
        let _ = writeln!(s, "slack_ratio_rel = {}", self.slack_ratio_rel);
        let _ = writeln!(s, "slack_sign = {}", self.slack_sign);
        let _ = writeln!(s, "slack_c0 = {}", self.slack_c0);
        let _ = writeln!(s, "slack_monotone = {}", self.slack_monotone);
        let _ = writeln!(
            s,
            "slack_conservation_rel = {}",
            self.slack_conservation_rel
        );
        let _ = writeln!(s, "\n[stationary]");
        let _ = writeln!(s, "solve_reference = {}", self.solve_reference);
        let _ = writeln!(s, "tol = {}", self.stationary_tol);
        if !self.scenario_params.is_empty() {
            let _ = writeln!(s, "\n[scenario]");
            for (k, v) in &self.scenario_params {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }

    pub fn scenario_spec(&self) -> ScenarioSpec {
        let mut spec = ScenarioSpec::named(
            &self.scenario,
            self.n,
            self.m,
            self.points_per_axis,
            self.seed,
        );
        spec.diff_method = if self.differentiator == "fd4" {
            DiffMethod::Fd4
        } else {
            DiffMethod::Spectral
        };
        spec.params = self.scenario_params.clone();
        spec
    }

    pub fn run_options(&self) -> Result<RunOptions> {
        Ok(RunOptions {
            method: Method::parse(&self.method)?,
            t_max: self.t_max,
            tol_converge: self.tol_converge,
            record_interval: self.record_interval,
            dt0: if self.dt0 > 0.0 { Some(self.dt0) } else { None },
            dt_max: if self.dt_max > 0.0 {
                Some(self.dt_max)
            } else {
                None
            },
            eig_floor_safety: self.eig_floor_safety,
            cfl_safety: self.cfl_safety,
            rkc_max_stages: self.rkc_max_stages,
            mask_delta: self.mask_delta,
            rho: None,
            store_fields: if self.store_fields == "all" {
                StoreFields::All
            } else {
                StoreFields::EndsOnly
            },
            max_steps: 50_000_000,
        })
    }

    pub fn monitor_slacks(&self) -> MonitorSlacks {
        MonitorSlacks {
            max_principle: self.slack_max_principle,
            ratio_rel: self.slack_ratio_rel,
            sign_bracket: self.slack_sign,
            c0: self.slack_c0,
            monotone: self.slack_monotone,
            conservation_rel: self.slack_conservation_rel,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips() {
        let cfg = RunConfig::default();
        let text = cfg.to_config_string();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn roundtrip_with_scenario_params_and_comments() {
        let mut cfg = RunConfig {
            scenario: "boundary".to_string(),
            seed: 7,
            t_max: 200.0,
            method: "rkc".to_string(),
            ..RunConfig::default()
        };
        cfg.scenario_params.insert("tilde_floor".to_string(), 0.8);
        cfg.scenario_params.insert("phi0_offset".to_string(), 0.3);
        let text = format!("# header comment\n{}\n# trailing", cfg.to_config_string());
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn negative_tolerance_names_the_field() {
        let text = RunConfig::default()
            .to_config_string()
            .replace("tol_converge = 0.00000001", "tol_converge = -1e-8");
        match RunConfig::parse(&text) {
            Err(Error::Config { field, .. }) => {
                assert_eq!(field.as_deref(), Some("flow.tol_converge"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let text = "[flow]\nnot_a_key = 1\n";
        match RunConfig::parse(text) {
            Err(Error::Config { line, field, .. }) => {
                assert_eq!(line, Some(2));
                assert_eq!(field.as_deref(), Some("flow.not_a_key"));
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn bad_m_n_combo_rejected() {
        let text = RunConfig::default()
            .to_config_string()
            .replace("m = 1", "m = 2");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn key_before_section_rejected() {
        assert!(RunConfig::parse("x = 1\n").is_err());
    }

    #[test]
    fn unterminated_section_rejected() {
        assert!(RunConfig::parse("[flow\n").is_err());
    }
}
