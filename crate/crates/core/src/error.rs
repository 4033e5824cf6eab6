use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid collaboration document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("link references unknown peer {0:?}")]
    UnknownPeer(String),
}
