//! Run configuration in a flat dotted `key = value` text format.
//!
//! The format is line-oriented: blank lines and `#` comments are skipped,
//! every other line must read `section.key = value`.  Later duplicates of
//! a key overwrite earlier ones.  [`RunConfig::serialize`] writes keys in
//! a fixed sorted order and round-trips exactly through
//! [`RunConfig::parse`].

use std::fmt::Write as _;

use crate::error::ConfigError;
use crate::operators::TimeScheme;

/// Which outer strategy drives the saddle-point solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StrategyKind {
    #[default]
    Vanilla,
    Refine,
    March,
}

impl StrategyKind {
    fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Vanilla => "vanilla",
            StrategyKind::Refine => "refine",
            StrategyKind::March => "march",
        }
    }
}

/// Fully describes one solver run; see the module docs for the format.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem_name: String,
    pub n_x: usize,
    pub n_t: usize,
    /// Step sizes; `None` falls back to the problem's defaults.
    pub tau_u: Option<f64>,
    pub tau_phi: Option<f64>,
    pub tau_lambda: Option<f64>,
    pub tau_u0: Option<f64>,
    pub eps: f64,
    pub max_iters: usize,
    pub time_scheme: TimeScheme,
    pub strategy: StrategyKind,
    /// Coarsest/finest ladder exponents; `None` derives them from `n_t`.
    pub coarsest_exponent: Option<u32>,
    pub finest_exponent: Option<u32>,
    pub level_cap: usize,
    pub output_dir: Option<String>,
    pub seed: u64,
    pub strict: bool,
}

impl RunConfig {
    /// Minimal valid configuration; everything else at its default.
    pub fn new(problem_name: &str, n_x: usize, n_t: usize) -> Self {
        Self {
            problem_name: problem_name.to_owned(),
            n_x,
            n_t,
            tau_u: None,
            tau_phi: None,
            tau_lambda: None,
            tau_u0: None,
            eps: 1e-6,
            max_iters: 100_000,
            time_scheme: TimeScheme::BackwardEuler,
            strategy: StrategyKind::Vanilla,
            coarsest_exponent: None,
            finest_exponent: None,
            level_cap: 1000,
            output_dir: None,
            seed: 0,
            strict: false,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut problem_name: Option<String> = None;
        let mut n_x: Option<usize> = None;
        let mut n_t: Option<usize> = None;
        let mut config = Self::new("", 0, 0);

        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| {
                ConfigError::MalformedLine {
                    line,
                    text: trimmed.to_owned(),
                }
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |message: &str| ConfigError::BadValue {
                line,
                field: key.to_owned(),
                message: message.to_owned(),
            };
            match key {
                "problem.name" => problem_name = Some(value.to_owned()),
                "grid.nx" => n_x = Some(parse_with(value, bad)?),
                "grid.nt" => n_t = Some(parse_with(value, bad)?),
                "pdhg.tau_u" => config.tau_u = Some(parse_with(value, bad)?),
                "pdhg.tau_phi" => config.tau_phi = Some(parse_with(value, bad)?),
                "pdhg.tau_lambda" => config.tau_lambda = Some(parse_with(value, bad)?),
                "pdhg.tau_u0" => config.tau_u0 = Some(parse_with(value, bad)?),
                "pdhg.eps" => config.eps = parse_with(value, bad)?,
                "pdhg.max_iters" => config.max_iters = parse_with(value, bad)?,
                "scheme.time" => {
                    config.time_scheme = match value {
                        "backward-euler" => TimeScheme::BackwardEuler,
                        "bdf2" => TimeScheme::Bdf2,
                        _ => return Err(bad("expected backward-euler or bdf2")),
                    }
                }
                "strategy.kind" => {
                    config.strategy = match value {
                        "vanilla" => StrategyKind::Vanilla,
                        "refine" => StrategyKind::Refine,
                        "march" => StrategyKind::March,
                        _ => return Err(bad("expected vanilla, refine, or march")),
                    }
                }
                "strategy.m_start" => config.coarsest_exponent = Some(parse_with(value, bad)?),
                "strategy.m0" => config.finest_exponent = Some(parse_with(value, bad)?),
                "strategy.level_cap" => config.level_cap = parse_with(value, bad)?,
                "output.dir" => config.output_dir = Some(value.to_owned()),
                "run.seed" => config.seed = parse_with(value, bad)?,
                "run.strict" => {
                    config.strict = match value {
                        "true" => true,
                        "false" => false,
                        _ => return Err(bad("expected true or false")),
                    }
                }
                _ => {
                    return Err(ConfigError::UnknownField {
                        line,
                        field: key.to_owned(),
                    })
                }
            }
        }

        let missing = |field: &str| ConfigError::MissingField {
            field: field.to_owned(),
        };
        config.problem_name = problem_name.ok_or_else(|| missing("problem.name"))?;
        config.n_x = n_x.ok_or_else(|| missing("grid.nx"))?;
        config.n_t = n_t.ok_or_else(|| missing("grid.nt"))?;
        Ok(config)
    }

    /// Canonical text form: alphabetical keys, optional fields only when
    /// set, floats in shortest round-trip form.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut put = |key: &str, value: &str| {
            let _ = writeln!(out, "{key} = {value}");
        };
        put("grid.nt", &self.n_t.to_string());
        put("grid.nx", &self.n_x.to_string());
        if let Some(dir) = &self.output_dir {
            put("output.dir", dir);
        }
        put("pdhg.eps", &self.eps.to_string());
        put("pdhg.max_iters", &self.max_iters.to_string());
        if let Some(v) = self.tau_lambda {
            put("pdhg.tau_lambda", &v.to_string());
        }
        if let Some(v) = self.tau_phi {
            put("pdhg.tau_phi", &v.to_string());
        }
        if let Some(v) = self.tau_u {
            put("pdhg.tau_u", &v.to_string());
        }
        if let Some(v) = self.tau_u0 {
            put("pdhg.tau_u0", &v.to_string());
        }
        put("problem.name", &self.problem_name);
        put("run.seed", &self.seed.to_string());
        put("run.strict", if self.strict { "true" } else { "false" });
        put(
            "scheme.time",
            match self.time_scheme {
                TimeScheme::BackwardEuler => "backward-euler",
                TimeScheme::Bdf2 => "bdf2",
            },
        );
        put("strategy.kind", self.strategy.as_str());
        put("strategy.level_cap", &self.level_cap.to_string());
        if let Some(v) = self.finest_exponent {
            put("strategy.m0", &v.to_string());
        }
        if let Some(v) = self.coarsest_exponent {
            put("strategy.m_start", &v.to_string());
        }
        out
    }
}

fn parse_with<T: std::str::FromStr>(
    value: &str,
    bad: impl Fn(&str) -> ConfigError,
) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| bad(&e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_fills_defaults() {
        let config = RunConfig::parse(
            "# solver run\nproblem.name = heat\ngrid.nx = 32\ngrid.nt = 64\n",
        )
        .unwrap();
        assert_eq!(config, RunConfig::new("heat", 32, 64));
        assert_eq!(config.eps, 1e-6);
        assert_eq!(config.max_iters, 100_000);
        assert_eq!(config.strategy, StrategyKind::Vanilla);
        assert!(!config.strict);
    }

    #[test]
    fn every_field_parses() {
        let text = "\
problem.name = traffic
grid.nx = 256
grid.nt = 32
pdhg.tau_u = 0.4
pdhg.tau_phi = 0.45
pdhg.tau_lambda = 0.99
pdhg.tau_u0 = 0.3
pdhg.eps = 0.001
pdhg.max_iters = 50000
scheme.time = bdf2
strategy.kind = refine
strategy.m_start = 3
strategy.m0 = 5
strategy.level_cap = 500
output.dir = out/run1
run.seed = 7
run.strict = true
";
        let config = RunConfig::parse(text).unwrap();
        assert_eq!(config.problem_name, "traffic");
        assert_eq!((config.n_x, config.n_t), (256, 32));
        assert_eq!(config.tau_u, Some(0.4));
        assert_eq!(config.tau_u0, Some(0.3));
        assert_eq!(config.eps, 1e-3);
        assert_eq!(config.time_scheme, TimeScheme::Bdf2);
        assert_eq!(config.strategy, StrategyKind::Refine);
        assert_eq!(config.coarsest_exponent, Some(3));
        assert_eq!(config.finest_exponent, Some(5));
        assert_eq!(config.level_cap, 500);
        assert_eq!(config.output_dir.as_deref(), Some("out/run1"));
        assert_eq!(config.seed, 7);
        assert!(config.strict);
    }

    #[test]
    fn serialization_round_trips() {
        let mut config = RunConfig::new("transport", 64, 128);
        config.tau_u = Some(0.5);
        config.tau_phi = Some(0.5);
        config.eps = 1e-10;
        config.time_scheme = TimeScheme::Bdf2;
        config.strategy = StrategyKind::March;
        config.output_dir = Some("results".to_owned());
        config.seed = 42;
        let text = config.serialize();
        assert_eq!(RunConfig::parse(&text).unwrap(), config);
        // canonical form is stable under a second round trip
        assert_eq!(RunConfig::parse(&text).unwrap().serialize(), text);
    }

    #[test]
    fn malformed_lines_are_located() {
        let err = RunConfig::parse("problem.name = heat\nwat\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::MalformedLine {
                line: 2,
                text: "wat".to_owned()
            }
        );
    }

    #[test]
    fn unknown_and_bad_fields_are_located() {
        let err = RunConfig::parse("problem.nam = heat\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownField {
                line: 1,
                field: "problem.nam".to_owned()
            }
        );
        let err = RunConfig::parse("grid.nx = many\n").unwrap_err();
        assert!(matches!(
            err,
            ConfigError::BadValue { line: 1, ref field, .. } if field == "grid.nx"
        ));
    }

    #[test]
    fn missing_required_fields_are_reported() {
        let err = RunConfig::parse("grid.nx = 4\ngrid.nt = 4\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::MissingField {
                field: "problem.name".to_owned()
            }
        );
        let err = RunConfig::parse("problem.name = heat\ngrid.nt = 4\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::MissingField {
                field: "grid.nx".to_owned()
            }
        );
    }

    #[test]
    fn later_duplicates_win() {
        let config =
            RunConfig::parse("problem.name = heat\ngrid.nx = 4\ngrid.nt = 4\ngrid.nx = 8\n")
                .unwrap();
        assert_eq!(config.n_x, 8);
    }
}
