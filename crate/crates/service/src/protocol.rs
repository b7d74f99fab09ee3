use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use deepview_core::classifier::{Classifier, ClassifierInfo, PredictRequest, PredictResponse};
use ndarray::Array2;

use crate::api::ApiError;

type Model = Arc<dyn Classifier>;

/// `/v1/info` and `/v1/predict` for `model`.
pub fn classifier_router(model: Model) -> Router {
    Router::new()
        .route("/v1/info", get(info))
        .route("/v1/predict", post(predict))
        .with_state(model)
}

async fn info(State(model): State<Model>) -> Json<ClassifierInfo> {
    Json(model.info().clone())
}

async fn predict(
    State(model): State<Model>,
    Json(req): Json<PredictRequest>,
) -> Result<Json<PredictResponse>, ApiError> {
    let d = model.info().input_dim;
    if let Some((i, row)) = req.inputs.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            format!("input {i} has width {}, expected {d}", row.len()),
        ));
    }
    let n = req.inputs.len();
    let flat: Vec<f64> = req.inputs.iter().flatten().map(|&v| f64::from(v)).collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "inputs must be finite"));
    }
    let x = Array2::from_shape_vec((n, d), flat).expect("rows checked");
    let probs = tokio::task::spawn_blocking(move || model.predict_batch(x.view()))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let probabilities = probs
        .outer_iter()
        .map(|row| {
            let s: f64 = row.sum();
            row.iter().map(|&p| (p / s) as f32).collect()
        })
        .collect();
    Ok(Json(PredictResponse { probabilities }))
}
