use super::{AbmilError, EmbeddingBag, HeadParams};

/// Attention-pooled slide representation. `attention` and `anchors` are in
/// row-major anchor order.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub pooled: Vec<f64>,
    pub attention: Vec<f64>,
    pub anchors: Vec<(u32, u32)>,
}

/// `s_k = wᵀ tanh(Vᵀ h_k)`, `a = softmax(s)`, `pooled = Σ a_k h_k`.
///
/// Tiles are visited in canonical order so the floating-point summation, and
/// therefore the result, does not depend on input tile order.
pub fn attention_pool(bag: &EmbeddingBag, params: &HeadParams) -> Result<Pooled, AbmilError> {
    if bag.dim != params.dim {
        return Err(AbmilError::Config(format!(
            "bag dimension {} != head dimension {}",
            bag.dim, params.dim
        )));
    }
    if bag.tiles.is_empty() {
        return Err(AbmilError::InvalidInput(format!("bag {} is empty", bag.slide_id)));
    }
    let (d, l) = (params.dim, params.hidden);
    let order = bag.canonical_order();
    let mut hidden = vec![0.0; l];
    let scores: Vec<f64> = order
        .iter()
        .map(|&i| {
            let h = &bag.tiles[i].feature;
            hidden.iter_mut().for_each(|v| *v = 0.0);
            for (r, &hr) in h.iter().enumerate().take(d) {
                let row = &params.attention_v[r * l..(r + 1) * l];
                for (acc, &v) in hidden.iter_mut().zip(row) {
                    *acc += v * hr;
                }
            }
            hidden.iter().zip(&params.attention_w).map(|(z, w)| w * z.tanh()).sum()
        })
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(AbmilError::Numeric(format!("non-finite attention score in {}", bag.slide_id)));
    }
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    let attention: Vec<f64> = exp.iter().map(|e| e / z).collect();
    let mut pooled = vec![0.0; d];
    for (a, &i) in attention.iter().zip(&order) {
        for (p, h) in pooled.iter_mut().zip(&bag.tiles[i].feature) {
            *p += a * h;
        }
    }
    let anchors = order.iter().map(|&i| bag.tiles[i].anchor()).collect();
    Ok(Pooled { pooled, attention, anchors })
}
