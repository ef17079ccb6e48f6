use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// `ceil(beta * n) < 2`: the consensus would be a single particle.
    #[error(
        "beta = {beta} selects {selected} of {n} particles; at least 2 are required \
         (beta_min = 2/N = {beta_min})"
    )]
    BetaTooSmall {
        beta: f64,
        n: usize,
        selected: usize,
        beta_min: f64,
    },

    #[error("objective returned non-finite value {value} at particle {index}")]
    Evaluation { index: usize, value: f64 },

    #[error("non-finite {term} update for particle {particle}")]
    Step { particle: usize, term: &'static str },

    #[error("regularized selection is empty (threshold {threshold}, radius {radius})")]
    DegenerateSelection { threshold: f64, radius: f64 },

    #[error("decay-fit window: {0}")]
    Window(String),

    #[error("unknown benchmark `{name}`; registered: {}", available.join(", "))]
    UnknownBenchmark {
        name: String,
        available: Vec<String>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input rather than by a failing simulation.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::BetaTooSmall { .. } | Error::UnknownBenchmark { .. }
        )
    }
}
