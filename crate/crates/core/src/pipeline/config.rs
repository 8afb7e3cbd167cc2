use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::{DistanceMetric, Linkage, DEFAULT_MAX_ITER, DEFAULT_SAMPLE_CAP};
use crate::{Error, Result};

/// Per-lemma clustering of occurrence vectors.
///
/// Text form: `kmeans:k=3`, `agglo:average:nu=0.0`, `identity`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LocalAlgorithm {
    KMeans { k: usize },
    Agglomerative { linkage: Linkage, nu: f64 },
    /// Every occurrence is its own local cluster.
    Identity,
}

/// Cross-lexicon clustering of local-cluster centroids.
///
/// Text form: `kmeans:pi=1.2` (or `pi=120%`), `agglo:average:nu=4.5`, `none`.
/// With `kmeans`, `k = round(pi * |W|)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GlobalAlgorithm {
    KMeans { proportion: f64 },
    Agglomerative { linkage: Linkage, nu: f64 },
    /// Every local cluster is its own concept.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    LocalOnly,
    GlobalOnly,
    Bilevel,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::LocalOnly => "local-only",
            Mode::GlobalOnly => "global-only",
            Mode::Bilevel => "bilevel",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "local-only" | "local" => Ok(Mode::LocalOnly),
            "global-only" | "global" => Ok(Mode::GlobalOnly),
            "bilevel" | "bi-level" => Ok(Mode::Bilevel),
            other => Err(Error::Parse(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub local: LocalAlgorithm,
    pub global: GlobalAlgorithm,
    /// Metric of agglomerative clustering. With cosine, k-means runs on
    /// unit-normalised vectors.
    #[serde(default)]
    pub metric: DistanceMetric,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sample_cap")]
    pub sample_cap: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_sample_cap() -> usize {
    DEFAULT_SAMPLE_CAP
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

impl PipelineConfig {
    pub fn new(local: LocalAlgorithm, global: GlobalAlgorithm) -> Self {
        PipelineConfig {
            local,
            global,
            metric: DistanceMetric::Cosine,
            seed: 0,
            sample_cap: DEFAULT_SAMPLE_CAP,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_metric(mut self, metric: DistanceMetric) -> Self {
        self.metric = metric;
        self
    }

    /// Average linkage on both levels, `nu_local = 0.0`, `nu_global = 4.5`.
    pub fn bilevel_agglo_reference() -> Self {
        PipelineConfig::new(
            LocalAlgorithm::Agglomerative {
                linkage: Linkage::Average,
                nu: 0.0,
            },
            GlobalAlgorithm::Agglomerative {
                linkage: Linkage::Average,
                nu: 4.5,
            },
        )
    }

    pub fn mode(&self) -> Mode {
        match (self.local, self.global) {
            (LocalAlgorithm::Identity, _) => Mode::GlobalOnly,
            (_, GlobalAlgorithm::None) => Mode::LocalOnly,
            _ => Mode::Bilevel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.local {
            LocalAlgorithm::KMeans { k: 0 } => {
                return Err(Error::InvalidParameter("local k-means needs k >= 1".into()))
            }
            LocalAlgorithm::Agglomerative { nu, .. } if !nu.is_finite() => {
                return Err(Error::InvalidParameter(format!("local nu must be finite, got {nu}")))
            }
            LocalAlgorithm::Identity if self.global == GlobalAlgorithm::None => {
                return Err(Error::InvalidParameter(
                    "identity local step needs a global clustering".into(),
                ))
            }
            _ => {}
        }
        match self.global {
            GlobalAlgorithm::KMeans { proportion } if !(proportion > 0.0 && proportion.is_finite()) => {
                Err(Error::InvalidParameter(format!(
                    "global proportion must be positive, got {proportion}"
                )))
            }
            GlobalAlgorithm::Agglomerative { nu, .. } if !nu.is_finite() => {
                Err(Error::InvalidParameter(format!("global nu must be finite, got {nu}")))
            }
            _ if self.max_iter == 0 => Err(Error::InvalidParameter("max_iter must be >= 1".into())),
            _ if self.sample_cap == 0 => {
                Err(Error::InvalidParameter("sample_cap must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Short label such as `bilevel local=agglo:average:nu=0 global=...`.
    pub fn label(&self) -> String {
        format!("{} local={} global={}", self.mode(), self.local, self.global)
    }
}

fn fmt_linkage_nu(f: &mut fmt::Formatter<'_>, linkage: Linkage, nu: f64) -> fmt::Result {
    write!(f, "agglo:{linkage}:nu={nu}")
}

impl fmt::Display for LocalAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LocalAlgorithm::KMeans { k } => write!(f, "kmeans:k={k}"),
            LocalAlgorithm::Agglomerative { linkage, nu } => fmt_linkage_nu(f, linkage, nu),
            LocalAlgorithm::Identity => f.write_str("identity"),
        }
    }
}

impl fmt::Display for GlobalAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            GlobalAlgorithm::KMeans { proportion } => write!(f, "kmeans:pi={proportion}"),
            GlobalAlgorithm::Agglomerative { linkage, nu } => fmt_linkage_nu(f, linkage, nu),
            GlobalAlgorithm::None => f.write_str("none"),
        }
    }
}

/// Splits `name:a:key=value` into the algorithm name, bare words and
/// key/value pairs.
fn tokens(s: &str) -> (String, Vec<String>, Vec<(String, String)>) {
    let mut parts = s.trim().split(':');
    let name = parts.next().unwrap_or("").trim().to_ascii_lowercase();
    let mut words = Vec::new();
    let mut pairs = Vec::new();
    for p in parts {
        match p.split_once('=') {
            Some((k, v)) => pairs.push((k.trim().to_ascii_lowercase(), v.trim().to_string())),
            None => words.push(p.trim().to_ascii_lowercase()),
        }
    }
    (name, words, pairs)
}

fn parse_num<T: FromStr>(spec: &str, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("{spec:?}: bad value for {key}: {value:?}")))
}

fn parse_agglo(spec: &str, words: &[String], pairs: &[(String, String)]) -> Result<(Linkage, f64)> {
    let mut linkage = Linkage::Average;
    let mut nu = None;
    for w in words {
        linkage = w.parse()?;
    }
    for (k, v) in pairs {
        match k.as_str() {
            "nu" => nu = Some(parse_num::<f64>(spec, k, v)?),
            "linkage" => linkage = v.parse()?,
            _ => return Err(Error::Parse(format!("{spec:?}: unknown key {k:?}"))),
        }
    }
    let nu = nu.ok_or_else(|| Error::Parse(format!("{spec:?}: missing nu=")))?;
    Ok((linkage, nu))
}

impl FromStr for LocalAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, words, pairs) = tokens(s);
        match name.as_str() {
            "identity" if words.is_empty() && pairs.is_empty() => Ok(LocalAlgorithm::Identity),
            "kmeans" => match pairs.as_slice() {
                [(k, v)] if k == "k" && words.is_empty() => Ok(LocalAlgorithm::KMeans {
                    k: parse_num(s, k, v)?,
                }),
                _ => Err(Error::Parse(format!("{s:?}: expected kmeans:k=<int>"))),
            },
            "agglo" | "agglomerative" => {
                let (linkage, nu) = parse_agglo(s, &words, &pairs)?;
                Ok(LocalAlgorithm::Agglomerative { linkage, nu })
            }
            _ => Err(Error::Parse(format!("unknown local algorithm {s:?}"))),
        }
    }
}

impl FromStr for GlobalAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, words, pairs) = tokens(s);
        match name.as_str() {
            "none" if words.is_empty() && pairs.is_empty() => Ok(GlobalAlgorithm::None),
            "kmeans" => match pairs.as_slice() {
                [(k, v)] if k == "pi" && words.is_empty() => {
                    let proportion = match v.strip_suffix('%') {
                        Some(pct) => parse_num::<f64>(s, k, pct)? / 100.0,
                        None => parse_num(s, k, v)?,
                    };
                    Ok(GlobalAlgorithm::KMeans { proportion })
                }
                _ => Err(Error::Parse(format!("{s:?}: expected kmeans:pi=<proportion>"))),
            },
            "agglo" | "agglomerative" => {
                let (linkage, nu) = parse_agglo(s, &words, &pairs)?;
                Ok(GlobalAlgorithm::Agglomerative { linkage, nu })
            }
            _ => Err(Error::Parse(format!("unknown global algorithm {s:?}"))),
        }
    }
}

impl TryFrom<String> for LocalAlgorithm {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LocalAlgorithm> for String {
    fn from(a: LocalAlgorithm) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for GlobalAlgorithm {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GlobalAlgorithm> for String {
    fn from(a: GlobalAlgorithm) -> String {
        a.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let l: LocalAlgorithm = "agglo:avg:nu=0.0".parse().unwrap();
        assert_eq!(
            l,
            LocalAlgorithm::Agglomerative {
                linkage: Linkage::Average,
                nu: 0.0
            }
        );
        assert_eq!(l.to_string(), "agglo:average:nu=0");
        let g: GlobalAlgorithm = "kmeans:pi=120%".parse().unwrap();
        assert_eq!(g, GlobalAlgorithm::KMeans { proportion: 1.2 });
        assert_eq!("kmeans:pi=1.2".parse::<GlobalAlgorithm>().unwrap(), g);
        assert_eq!("kmeans:k=3".parse::<LocalAlgorithm>().unwrap(), LocalAlgorithm::KMeans { k: 3 });
        assert_eq!("identity".parse::<LocalAlgorithm>().unwrap(), LocalAlgorithm::Identity);
        assert_eq!("none".parse::<GlobalAlgorithm>().unwrap(), GlobalAlgorithm::None);
        for s in ["agglo:average:nu=-1.5", "kmeans:k=8", "identity"] {
            assert_eq!(s.parse::<LocalAlgorithm>().unwrap().to_string(), s);
        }
        assert!("agglo:average".parse::<LocalAlgorithm>().is_err());
        assert!("kmeans:pi=1".parse::<LocalAlgorithm>().is_err());
        assert!("spectral".parse::<GlobalAlgorithm>().is_err());
    }

    #[test]
    fn modes_and_validation() {
        let c = PipelineConfig::bilevel_agglo_reference();
        assert_eq!(c.mode(), Mode::Bilevel);
        assert!(c.validate().is_ok());
        let g = PipelineConfig::new(LocalAlgorithm::Identity, GlobalAlgorithm::KMeans { proportion: 1.2 });
        assert_eq!(g.mode(), Mode::GlobalOnly);
        let l = PipelineConfig::new(LocalAlgorithm::KMeans { k: 3 }, GlobalAlgorithm::None);
        assert_eq!(l.mode(), Mode::LocalOnly);
        assert!(PipelineConfig::new(LocalAlgorithm::Identity, GlobalAlgorithm::None)
            .validate()
            .is_err());
        assert!(PipelineConfig::new(LocalAlgorithm::KMeans { k: 3 }, GlobalAlgorithm::KMeans { proportion: 0.0 })
            .validate()
            .is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = PipelineConfig::bilevel_agglo_reference().with_seed(7);
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"agglo:average:nu=4.5\""));
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }
}
