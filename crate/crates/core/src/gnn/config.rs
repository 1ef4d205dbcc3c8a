use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sizes a GNN hidden or head layer may take.
pub const LAYER_SIZES: [usize; 4] = [32, 64, 128, 256];
pub const MIN_STEPS: usize = 2;
pub const MAX_STEPS: usize = 6;
pub const MAX_HEADS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GnnArch {
    Gcn,
    Gat,
    Meta,
}

impl GnnArch {
    pub const ALL: [GnnArch; 3] = [GnnArch::Gcn, GnnArch::Gat, GnnArch::Meta];

    pub fn tag(self) -> &'static str {
        match self {
            GnnArch::Gcn => "gcn",
            GnnArch::Gat => "gat",
            GnnArch::Meta => "meta",
        }
    }
}

impl std::str::FromStr for GnnArch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GnnArch::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::Validation(format!("unknown graph architecture `{s}`")))
    }
}

impl std::fmt::Display for GnnArch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    pub steps: usize,
    pub hidden: usize,
    pub head: usize,
    pub learning_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatConfig {
    pub steps: usize,
    pub hidden: usize,
    pub head: usize,
    pub heads: usize,
    pub learning_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub steps: usize,
    pub hidden: usize,
    pub learning_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum GnnConfig {
    Gcn(GcnConfig),
    Gat(GatConfig),
    Meta(MetaConfig),
}

fn check_steps(steps: usize) -> Result<()> {
    if !(MIN_STEPS..=MAX_STEPS).contains(&steps) {
        return Err(Error::Validation(format!(
            "steps {steps} outside [{MIN_STEPS}, {MAX_STEPS}]"
        )));
    }
    Ok(())
}

fn check_size(what: &str, size: usize) -> Result<()> {
    if !LAYER_SIZES.contains(&size) {
        return Err(Error::Validation(format!(
            "{what} size {size} not one of {LAYER_SIZES:?}"
        )));
    }
    Ok(())
}

fn check_lr(lr: f64) -> Result<()> {
    if !(lr.is_finite() && lr > 0.0) {
        return Err(Error::Validation(format!("learning rate {lr} must be positive")));
    }
    Ok(())
}

impl GnnConfig {
    pub fn arch(&self) -> &'static str {
        self.kind().tag()
    }

    pub fn kind(&self) -> GnnArch {
        match self {
            GnnConfig::Gcn(_) => GnnArch::Gcn,
            GnnConfig::Gat(_) => GnnArch::Gat,
            GnnConfig::Meta(_) => GnnArch::Meta,
        }
    }

    /// Size of the dense layer before the output, if the architecture has one.
    pub fn head(&self) -> Option<usize> {
        match self {
            GnnConfig::Gcn(c) => Some(c.head),
            GnnConfig::Gat(c) => Some(c.head),
            GnnConfig::Meta(_) => None,
        }
    }

    pub fn heads(&self) -> Option<usize> {
        match self {
            GnnConfig::Gat(c) => Some(c.heads),
            _ => None,
        }
    }

    pub fn steps(&self) -> usize {
        match self {
            GnnConfig::Gcn(c) => c.steps,
            GnnConfig::Gat(c) => c.steps,
            GnnConfig::Meta(c) => c.steps,
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            GnnConfig::Gcn(c) => c.hidden,
            GnnConfig::Gat(c) => c.hidden,
            GnnConfig::Meta(c) => c.hidden,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match self {
            GnnConfig::Gcn(c) => c.learning_rate,
            GnnConfig::Gat(c) => c.learning_rate,
            GnnConfig::Meta(c) => c.learning_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_steps(self.steps())?;
        check_size("hidden", self.hidden())?;
        check_lr(self.learning_rate())?;
        match self {
            GnnConfig::Gcn(c) => check_size("head", c.head),
            GnnConfig::Gat(c) => {
                check_size("head", c.head)?;
                if !(1..=MAX_HEADS).contains(&c.heads) {
                    return Err(Error::Validation(format!(
                        "attention heads {} outside [1, {MAX_HEADS}]",
                        c.heads
                    )));
                }
                Ok(())
            }
            GnnConfig::Meta(_) => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerated_sizes_only() {
        let ok = GnnConfig::Gcn(GcnConfig {
            steps: 2,
            hidden: 32,
            head: 64,
            learning_rate: 1e-3,
        });
        ok.validate().unwrap();
        let bad = GnnConfig::Gcn(GcnConfig {
            hidden: 48,
            ..match ok {
                GnnConfig::Gcn(c) => c,
                _ => unreachable!(),
            }
        });
        assert!(bad.validate().is_err());
        let heads = GnnConfig::Gat(GatConfig {
            steps: 3,
            hidden: 32,
            head: 32,
            heads: 9,
            learning_rate: 1e-3,
        });
        assert!(heads.validate().is_err());
        let steps = GnnConfig::Meta(MetaConfig {
            steps: 7,
            hidden: 32,
            learning_rate: 1e-3,
        });
        assert!(steps.validate().is_err());
    }

    #[test]
    fn serde_tagged_by_arch() {
        let c = GnnConfig::Meta(MetaConfig {
            steps: 2,
            hidden: 64,
            learning_rate: 0.01,
        });
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"arch\":\"meta\""), "{text}");
        assert_eq!(serde_json::from_str::<GnnConfig>(&text).unwrap(), c);
    }
}
