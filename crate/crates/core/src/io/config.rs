//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored; every key is typed and unknown
//! keys are rejected with their line number.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::read_text;
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

fn value<T: FromStr>(path: &Path, line: usize, key: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("bad value {raw:?} for {key}: {e}"),
    })
}

/// Applies the assignments in `text` on top of [`TrainConfig::default`].
pub fn parse_config(text: &str, path: &Path) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: ln,
                msg: format!("expected key = value, found {line:?}"),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        match k {
            "dim" => cfg.dim = value(path, ln, k, v)?,
            "lr" => cfg.lr = value(path, ln, k, v)?,
            "epochs" => cfg.epochs = value(path, ln, k, v)?,
            "pretrain_epochs" => cfg.pretrain_epochs = value(path, ln, k, v)?,
            "tau" => cfg.tau = value(path, ln, k, v)?,
            "fade" => cfg.fade = value(path, ln, k, v)?,
            "alpha" => cfg.alpha = value(path, ln, k, v)?,
            "lambda" => cfg.lambda = value(path, ln, k, v)?,
            "negatives" => cfg.negatives = value(path, ln, k, v)?,
            "local_size" => cfg.local_size = value(path, ln, k, v)?,
            "seed" => cfg.seed = value(path, ln, k, v)?,
            "activation" => cfg.activation = value(path, ln, k, v)?,
            "score" => cfg.score = value(path, ln, k, v)?,
            "row_normalize_features" => cfg.row_normalize = value(path, ln, k, v)?,
            "inner_steps" => cfg.inner_steps = value(path, ln, k, v)?,
            "intra" => cfg.terms.intra = value(path, ln, k, v)?,
            "inter" => cfg.terms.inter = value(path, ln, k, v)?,
            other => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: ln,
                    msg: format!("unknown key {other:?}"),
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    parse_config(&read_text(path)?, path)
}

/// Every key with its resolved value, in a fixed order.
pub fn render_config(cfg: &TrainConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dim = {}", cfg.dim);
    let _ = writeln!(s, "lr = {:?}", cfg.lr);
    let _ = writeln!(s, "epochs = {}", cfg.epochs);
    let _ = writeln!(s, "pretrain_epochs = {}", cfg.pretrain_epochs);
    let _ = writeln!(s, "tau = {}", cfg.tau);
    let _ = writeln!(s, "fade = {:?}", cfg.fade);
    let _ = writeln!(s, "alpha = {:?}", cfg.alpha);
    let _ = writeln!(s, "lambda = {:?}", cfg.lambda);
    let _ = writeln!(s, "negatives = {}", cfg.negatives);
    let _ = writeln!(s, "local_size = {}", cfg.local_size);
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "activation = {}", cfg.activation.name());
    let _ = writeln!(s, "score = {}", cfg.score.name());
    let _ = writeln!(s, "row_normalize_features = {}", cfg.row_normalize);
    let _ = writeln!(s, "inner_steps = {}", cfg.inner_steps);
    let _ = writeln!(s, "intra = {}", cfg.terms.intra);
    let _ = writeln!(s, "inter = {}", cfg.terms.inter);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_typed_values_and_comments() {
        let text = "# run\ndim = 16\nlr=0.01  # faster\nactivation = tanh\nrow_normalize_features = false\n\nintra = false\n";
        let cfg = parse_config(text, Path::new("c.cfg")).unwrap();
        assert_eq!(cfg.dim, 16);
        assert_eq!(cfg.lr, 0.01);
        assert_eq!(cfg.activation, crate::Activation::Tanh);
        assert!(!cfg.row_normalize);
        assert!(!cfg.terms.intra && cfg.terms.inter);
        assert_eq!(cfg.tau, 30);
    }

    #[test]
    fn render_round_trips() {
        let cfg = TrainConfig {
            alpha: 0.1,
            lambda: 1.0,
            seed: 42,
            score: crate::Score::Cosine,
            ..TrainConfig::default()
        };
        assert_eq!(
            parse_config(&render_config(&cfg), Path::new("x")).unwrap(),
            cfg
        );
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values_with_lines() {
        let e = parse_config("dim = 8\nwidth = 3\n", Path::new("c.cfg"))
            .unwrap_err()
            .to_string();
        assert!(e.starts_with("c.cfg:2:") && e.contains("width"), "{e}");
        let e = parse_config("tau = soon\n", Path::new("c.cfg"))
            .unwrap_err()
            .to_string();
        assert!(e.starts_with("c.cfg:1:"), "{e}");
        let e = parse_config("just words\n", Path::new("c.cfg"))
            .unwrap_err()
            .to_string();
        assert!(e.contains("key = value"), "{e}");
        assert!(parse_config("fade = 2\n", Path::new("c.cfg")).is_err());
    }
}
