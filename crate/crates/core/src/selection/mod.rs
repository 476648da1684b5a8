//! Model selection: generalized information criteria (maximized) and Monte
//! Carlo cross-validation (minimized).

mod gic;
mod mccv;

use std::fmt;
use std::sync::Arc;

pub use gic::{gic_scores, gic_select, penalty_value};
pub use mccv::{
    default_split_count, draw_split, mccv_score, mccv_scores, mccv_select, split_sizes, MccvDesign,
};

use crate::error::{Error, Result};

/// Dimension penalty `lambda_nT` of a GIC.
#[derive(Clone)]
pub enum Penalty {
    /// `2`
    Aic,
    /// `log(nT)`
    Bic,
    /// `sqrt(nT log log nT)`
    Sw1,
    /// `sqrt(nT log nT)`
    Sw2,
    Custom {
        name: String,
        lambda: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl Penalty {
    pub fn label(&self) -> String {
        match self {
            Penalty::Aic => "aic".into(),
            Penalty::Bic => "bic".into(),
            Penalty::Sw1 => "sw1".into(),
            Penalty::Sw2 => "sw2".into(),
            Penalty::Custom { name, .. } => name.clone(),
        }
    }
}

/// How MCCV splits units into training (`n_c`) and test (`n_v`) sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitRule {
    /// `n_c / n = p`.
    FixedP(f64),
    /// `n_c = ceil(n^{3/4})`, so `n_v / n -> 1` and `n_c -> inf`.
    Shao,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MccvConfig {
    pub rule: SplitRule,
    /// Number of splits `b`; `None` uses [`default_split_count`].
    pub splits: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum CriterionSpec {
    Gic(Penalty),
    Mccv(MccvConfig),
}

impl CriterionSpec {
    pub fn label(&self) -> String {
        match self {
            CriterionSpec::Gic(p) => p.label(),
            CriterionSpec::Mccv(c) => match c.rule {
                SplitRule::FixedP(p) => format!("mccv-p:{p}"),
                SplitRule::Shao => "mccv-shao".into(),
            },
        }
    }

    pub fn maximizes(&self) -> bool {
        matches!(self, CriterionSpec::Gic(_))
    }

    /// Parse `aic`, `bic`, `sw1`, `sw2`, `mccv-p:<p>` or `mccv-shao`.
    pub fn parse(token: &str, splits: Option<usize>, seed: u64) -> Result<Self> {
        let t = token.trim().to_ascii_lowercase();
        let spec = match t.as_str() {
            "aic" => CriterionSpec::Gic(Penalty::Aic),
            "bic" => CriterionSpec::Gic(Penalty::Bic),
            "sw1" => CriterionSpec::Gic(Penalty::Sw1),
            "sw2" => CriterionSpec::Gic(Penalty::Sw2),
            "mccv-shao" => CriterionSpec::Mccv(MccvConfig {
                rule: SplitRule::Shao,
                splits,
                seed,
            }),
            other => {
                let Some(p) = other.strip_prefix("mccv-p:") else {
                    return Err(Error::invalid(format!("unknown criterion '{token}'")));
                };
                let p: f64 = p
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad MCCV ratio in '{token}'")))?;
                CriterionSpec::Mccv(MccvConfig {
                    rule: SplitRule::FixedP(p),
                    splits,
                    seed,
                })
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if let CriterionSpec::Mccv(c) = self {
            if let SplitRule::FixedP(p) = c.rule {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::invalid(format!("MCCV ratio p must lie in (0, 1), got {p}")));
                }
            }
            if c.splits == Some(0) {
                return Err(Error::invalid("MCCV needs at least one split"));
            }
        }
        Ok(())
    }
}

/// The six criteria compared throughout: AIC, BIC, SW1, SW2, MCCV-p(0.75)
/// and MCCV-Shao.
pub fn standard_criteria(splits: Option<usize>, seed: u64) -> Vec<CriterionSpec> {
    vec![
        CriterionSpec::Gic(Penalty::Aic),
        CriterionSpec::Gic(Penalty::Bic),
        CriterionSpec::Gic(Penalty::Sw1),
        CriterionSpec::Gic(Penalty::Sw2),
        CriterionSpec::Mccv(MccvConfig {
            rule: SplitRule::FixedP(0.75),
            splits,
            seed,
        }),
        CriterionSpec::Mccv(MccvConfig {
            rule: SplitRule::Shao,
            splits,
            seed,
        }),
    ]
}

/// One candidate's score.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelScore {
    pub model: String,
    pub k: usize,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub criterion: CriterionSpec,
    /// In candidate order.
    pub scores: Vec<ModelScore>,
    pub selected: String,
    /// Every model whose score is within tie tolerance of the optimum.
    pub ties: Vec<String>,
    pub n: usize,
    pub t: usize,
}

impl SelectionReport {
    pub fn n_obs(&self) -> usize {
        self.n * self.t
    }

    pub fn score(&self, model: &str) -> Option<f64> {
        self.scores.iter().find(|s| s.model == model).map(|s| s.score)
    }

    /// Pick the optimum; ties (gap `<= 1e-10 (1 + |opt|)`) are broken by
    /// smallest `k`, then name.
    pub fn from_scores(criterion: CriterionSpec, scores: Vec<ModelScore>, n: usize, t: usize) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid("no candidate models"));
        }
        if let Some(bad) = scores.iter().find(|s| s.score.is_nan()) {
            return Err(Error::Numerical(format!("model '{}' has an undefined score", bad.model)));
        }
        let maximize = criterion.maximizes();
        let better = |a: f64, b: f64| if maximize { a > b } else { a < b };
        let opt = scores
            .iter()
            .map(|s| s.score)
            .fold(scores[0].score, |m, s| if better(s, m) { s } else { m });
        let tol = 1e-10 * (1.0 + opt.abs());
        let mut tied: Vec<&ModelScore> = scores
            .iter()
            .filter(|s| s.score == opt || (s.score - opt).abs() <= tol)
            .collect();
        tied.sort_by(|a, b| a.k.cmp(&b.k).then_with(|| a.model.cmp(&b.model)));
        let selected = tied[0].model.clone();
        let ties = if tied.len() > 1 {
            tied.iter().map(|s| s.model.clone()).collect()
        } else {
            Vec::new()
        };
        Ok(SelectionReport {
            criterion,
            scores,
            selected,
            ties,
            n,
            t,
        })
    }
}

pub fn check_unique_names<'a>(names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for name in names {
        if !seen.insert(name) {
            return Err(Error::invalid(format!("duplicate model name '{name}'")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(model: &str, k: usize, score: f64) -> ModelScore {
        ModelScore {
            model: model.into(),
            k,
            score,
        }
    }

    #[test]
    fn identical_scores_tie_and_pick_smaller_name() {
        let r = SelectionReport::from_scores(
            CriterionSpec::Gic(Penalty::Bic),
            vec![s("beta", 1, -3.0), s("alpha", 1, -3.0)],
            10,
            2,
        )
        .unwrap();
        assert_eq!(r.selected, "alpha");
        assert_eq!(r.ties, vec!["alpha", "beta"]);
    }

    #[test]
    fn tie_prefers_smaller_k() {
        let r = SelectionReport::from_scores(
            CriterionSpec::Gic(Penalty::Aic),
            vec![s("a", 4, 1.0), s("b", 1, 1.0 + 1e-12)],
            10,
            2,
        )
        .unwrap();
        assert_eq!(r.selected, "b");
    }

    #[test]
    fn mccv_minimizes() {
        let crit = CriterionSpec::parse("mccv-shao", None, 1).unwrap();
        let r = SelectionReport::from_scores(crit, vec![s("a", 1, 2.0), s("b", 2, 1.5)], 10, 2).unwrap();
        assert_eq!(r.selected, "b");
        assert!(r.ties.is_empty());
    }

    #[test]
    fn parse_labels_roundtrip() {
        for tok in ["aic", "bic", "sw1", "sw2", "mccv-p:0.75", "mccv-shao"] {
            assert_eq!(CriterionSpec::parse(tok, None, 0).unwrap().label(), tok);
        }
        assert!(CriterionSpec::parse("mccv-p:1.5", None, 0).is_err());
        assert!(CriterionSpec::parse("hqic", None, 0).is_err());
        assert!(CriterionSpec::parse("mccv-shao", Some(0), 0).is_err());
    }
}
