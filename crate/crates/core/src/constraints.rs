//! Equality constraints across subsets of mixture components.
//!
//! Each parameter kind (location, scale, shape) carries its own partition of
//! the component indices; parameters of that kind are equal inside a block.
//! Indices are zero-based in memory and one-based in serialized form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three per-component parameters a constraint can tie together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Mu,
    Sigma,
    Nu,
}

impl ParamKind {
    pub const ALL: [ParamKind; 3] = [ParamKind::Mu, ParamKind::Sigma, ParamKind::Nu];

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::Mu => "mu",
            ParamKind::Sigma => "sigma",
            ParamKind::Nu => "nu",
        }
    }
}

/// A partition of `0..k` into nonempty blocks, canonically ordered.
pub type Partition = Vec<Vec<usize>>;

fn canonical_partition(k: usize, mut blocks: Partition, kind: ParamKind) -> Result<Partition> {
    let mut seen = vec![false; k];
    for block in &mut blocks {
        if block.is_empty() {
            return Err(Error::Input(format!("{} partition contains an empty block", kind.name())));
        }
        block.sort_unstable();
        for &idx in block.iter() {
            if idx >= k {
                return Err(Error::Input(format!(
                    "{} partition references component {} but K = {k}",
                    kind.name(),
                    idx + 1
                )));
            }
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::Input(format!(
                    "{} partition lists component {} twice",
                    kind.name(),
                    idx + 1
                )));
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Input(format!(
            "{} partition does not cover component {}",
            kind.name(),
            missing + 1
        )));
    }
    blocks.sort_unstable_by_key(|b| b[0]);
    Ok(blocks)
}

fn singletons(k: usize) -> Partition {
    (0..k).map(|i| vec![i]).collect()
}

/// Equality constraints on location, scale and shape across components.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct ConstraintSpec {
    k: usize,
    mu: Partition,
    sigma: Partition,
    nu: Partition,
}

impl ConstraintSpec {
    /// Builds a spec from zero-based partitions, validating and canonicalizing them.
    pub fn new(k: usize, mu: Partition, sigma: Partition, nu: Partition) -> Result<Self> {
        if k == 0 {
            return Err(Error::Input("a mixture needs at least one component".into()));
        }
        Ok(Self {
            k,
            mu: canonical_partition(k, mu, ParamKind::Mu)?,
            sigma: canonical_partition(k, sigma, ParamKind::Sigma)?,
            nu: canonical_partition(k, nu, ParamKind::Nu)?,
        })
    }

    /// All-singleton partitions: no constraints.
    pub fn unconstrained(k: usize) -> Self {
        Self { k, mu: singletons(k), sigma: singletons(k), nu: singletons(k) }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn blocks(&self, kind: ParamKind) -> &Partition {
        match kind {
            ParamKind::Mu => &self.mu,
            ParamKind::Sigma => &self.sigma,
            ParamKind::Nu => &self.nu,
        }
    }

    pub fn is_unconstrained(&self, kind: ParamKind) -> bool {
        self.blocks(kind).len() == self.k
    }

    /// Relabels components: new component `i` is old component `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.k {
            return Err(Error::Input("permutation length differs from K".into()));
        }
        let mut inverse = vec![usize::MAX; self.k];
        for (new, &old) in perm.iter().enumerate() {
            if old >= self.k || inverse[old] != usize::MAX {
                return Err(Error::Input("not a permutation".into()));
            }
            inverse[old] = new;
        }
        let map = |p: &Partition| -> Partition {
            p.iter().map(|b| b.iter().map(|&old| inverse[old]).collect()).collect()
        };
        Self::new(self.k, map(&self.mu), map(&self.sigma), map(&self.nu))
    }
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    mu: Vec<Vec<usize>>,
    sigma: Vec<Vec<usize>>,
    nu: Vec<Vec<usize>>,
}

impl TryFrom<RawSpec> for ConstraintSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let k = raw.mu.iter().flatten().count();
        let to_zero = |p: Vec<Vec<usize>>, kind: ParamKind| -> Result<Partition> {
            p.into_iter()
                .map(|b| {
                    b.into_iter()
                        .map(|i| {
                            i.checked_sub(1).ok_or_else(|| {
                                Error::Input(format!(
                                    "{} partition: component indices are 1-based",
                                    kind.name()
                                ))
                            })
                        })
                        .collect()
                })
                .collect()
        };
        Self::new(
            k,
            to_zero(raw.mu, ParamKind::Mu)?,
            to_zero(raw.sigma, ParamKind::Sigma)?,
            to_zero(raw.nu, ParamKind::Nu)?,
        )
    }
}

impl From<ConstraintSpec> for RawSpec {
    fn from(spec: ConstraintSpec) -> Self {
        let to_one = |p: Partition| p.into_iter().map(|b| b.into_iter().map(|i| i + 1).collect()).collect();
        RawSpec { mu: to_one(spec.mu), sigma: to_one(spec.sigma), nu: to_one(spec.nu) }
    }
}

/// Three-letter label such as `UCC`: per parameter kind (mu, sigma, nu),
/// `C` ties the designated block together and `U` leaves all components free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelCode {
    pub mu: bool,
    pub sigma: bool,
    pub nu: bool,
}

impl ModelCode {
    pub const UUU: ModelCode = ModelCode { mu: false, sigma: false, nu: false };

    pub fn constrained(self, kind: ParamKind) -> bool {
        match kind {
            ParamKind::Mu => self.mu,
            ParamKind::Sigma => self.sigma,
            ParamKind::Nu => self.nu,
        }
    }

    /// Expands to a spec on `k` components. `block` is the zero-based set of
    /// components tied together for every `C` letter.
    pub fn to_spec(self, k: usize, block: &[usize]) -> Result<ConstraintSpec> {
        let partition = |constrained: bool| -> Result<Partition> {
            if !constrained {
                return Ok(singletons(k));
            }
            if block.len() < 2 {
                return Err(Error::Input("a designated block needs at least two components".into()));
            }
            if let Some(&bad) = block.iter().find(|&&i| i >= k) {
                return Err(Error::Input(format!(
                    "designated block references component {} but K = {k}",
                    bad + 1
                )));
            }
            let mut parts: Partition = vec![block.to_vec()];
            parts.extend((0..k).filter(|i| !block.contains(i)).map(|i| vec![i]));
            Ok(parts)
        };
        ConstraintSpec::new(k, partition(self.mu)?, partition(self.sigma)?, partition(self.nu)?)
    }

    /// Expands with all `k` components in the designated block, as in the
    /// two-component family.
    pub fn to_spec_all(self, k: usize) -> Result<ConstraintSpec> {
        let block: Vec<usize> = (0..k).collect();
        self.to_spec(k, &block)
    }

    /// Recovers the code of a spec whose partitions are each either all
    /// singletons or one shared multi-member block plus singletons.
    pub fn classify(spec: &ConstraintSpec) -> Option<ModelCode> {
        let mut designated: Option<&Vec<usize>> = None;
        let mut letters = [false; 3];
        for (slot, kind) in ParamKind::ALL.iter().enumerate() {
            let multi: Vec<&Vec<usize>> = spec.blocks(*kind).iter().filter(|b| b.len() > 1).collect();
            match multi.as_slice() {
                [] => {}
                [b] => {
                    if designated.is_some_and(|d| d != *b) {
                        return None;
                    }
                    designated = Some(b);
                    letters[slot] = true;
                }
                _ => return None,
            }
        }
        Some(ModelCode { mu: letters[0], sigma: letters[1], nu: letters[2] })
    }
}

impl fmt::Display for ModelCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let letter = |c: bool| if c { 'C' } else { 'U' };
        write!(f, "{}{}{}", letter(self.mu), letter(self.sigma), letter(self.nu))
    }
}

impl FromStr for ModelCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters: Vec<char> = s.trim().chars().collect();
        if letters.len() != 3 {
            return Err(Error::Input(format!("model code must have three letters, got {s:?}")));
        }
        let mut flags = [false; 3];
        for (flag, c) in flags.iter_mut().zip(&letters) {
            *flag = match c.to_ascii_uppercase() {
                'C' => true,
                'U' => false,
                other => {
                    return Err(Error::Input(format!("model code letters are C or U, got {other:?}")))
                }
            };
        }
        Ok(ModelCode { mu: flags[0], sigma: flags[1], nu: flags[2] })
    }
}

impl Serialize for ModelCode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModelCode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
