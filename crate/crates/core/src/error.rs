use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cluster too large: Hilbert space dimension {dim} exceeds cap {cap}")]
    ClusterTooLarge { dim: usize, cap: usize },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("missing hyperfine entry for {} site(s): {}", .sites.len(), format_sites(.sites))]
    MissingHyperfine { sites: Vec<String> },

    #[error("non-physical bath state: {0}")]
    NonPhysicalState(String),

    #[error("missing sub-cluster {missing:?} required by cluster {cluster:?}")]
    MissingSubCluster { cluster: Vec<usize>, missing: Vec<usize> },

    #[error("magnetic field is within the GSLAC vicinity: gap {gap_mhz:.3} MHz")]
    GslacVicinity { gap_mhz: f64 },

    #[error("time grid too coarse: Nyquist frequency {nyquist_mhz:.2} MHz below required {required_mhz:.2} MHz")]
    Nyquist { nyquist_mhz: f64, required_mhz: f64 },

    #[error("eigendecomposition failed to converge")]
    Eigen,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_sites(sites: &[String]) -> String {
    const SHOWN: usize = 20;
    let mut s = sites.iter().take(SHOWN).cloned().collect::<Vec<_>>().join("; ");
    if sites.len() > SHOWN {
        s.push_str(&format!("; ... ({} more)", sites.len() - SHOWN));
    }
    s
}
