//! The central communicator: a single-layer LSTM over projected
//! action/observation pairs.
//!
//! After both agents act at a step, the chosen relation and current entity
//! embeddings of the two modalities are concatenated, projected by `W_c`
//! into the cell input, and folded into the recurrent state. Policies at
//! step t+1 condition on the state produced at step t; the policies at the
//! first step see the all-zeros initial state.

use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CopathError, Result};

/// Projection plus LSTM cell weights.
///
/// `w_c` maps the concatenated embedding pair(s) into the cell input
/// (`d_in` rows). Each gate matrix acts on `[input; hidden]` and carries a
/// bias; the forget-gate bias starts at 1 so that early training does not
/// wash the cell state out.
#[derive(Debug, Clone, PartialEq)]
pub struct CommParams {
    pub w_c: Array2<f64>,
    pub w_i: Array2<f64>,
    pub b_i: Array1<f64>,
    pub w_f: Array2<f64>,
    pub b_f: Array1<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub w_g: Array2<f64>,
    pub b_g: Array1<f64>,
}

impl CommParams {
    /// Seeded initialization: forget-gate bias 1, everything else uniform
    /// in [-scale, scale]. `concat_dim` is the width of the embedding
    /// concatenation `w_c` consumes (4·d for the shared communicator, 2·d
    /// for a private encoder).
    pub fn init(
        concat_dim: usize,
        d_in: usize,
        d_h: usize,
        scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mat = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            let mut m = Array2::<f64>::zeros((rows, cols));
            for x in m.iter_mut() {
                *x = rng.gen_range(-scale..=scale);
            }
            m
        };
        let vec = |n: usize, rng: &mut ChaCha8Rng| {
            let mut v = Array1::<f64>::zeros(n);
            for x in v.iter_mut() {
                *x = rng.gen_range(-scale..=scale);
            }
            v
        };
        let z = d_in + d_h;
        CommParams {
            w_c: mat(d_in, concat_dim, rng),
            w_i: mat(d_h, z, rng),
            b_i: vec(d_h, rng),
            w_f: mat(d_h, z, rng),
            b_f: Array1::from_elem(d_h, 1.0),
            w_o: mat(d_h, z, rng),
            b_o: vec(d_h, rng),
            w_g: mat(d_h, z, rng),
            b_g: vec(d_h, rng),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w_c.nrows()
    }

    pub fn d_h(&self) -> usize {
        self.w_i.nrows()
    }

    pub fn concat_dim(&self) -> usize {
        self.w_c.ncols()
    }
}

/// Recurrent state (hidden and cell vectors). Fresh episodes start from
/// all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct CommState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

impl CommState {
    pub fn zeros(d_h: usize) -> Self {
        CommState {
            h: Array1::zeros(d_h),
            c: Array1::zeros(d_h),
        }
    }
}

/// Numerically bounded logistic function.
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Project a concatenation of embedding rows through `w_c` into the cell
/// input. The rows are concatenated in the order given — for the shared
/// communicator that order is fixed: video relation, video entity, context
/// relation, context entity.
pub fn comm_input(w_c: &Array2<f64>, parts: &[ArrayView1<f64>]) -> Result<Array1<f64>> {
    let total: usize = parts.iter().map(|p| p.len()).sum();
    if total != w_c.ncols() {
        return Err(CopathError::InvalidInput(format!(
            "communicator projection expects {} inputs, got {total}",
            w_c.ncols()
        )));
    }
    let concat = concatenate(Axis(0), parts).expect("1-d concatenation cannot fail");
    if concat.iter().any(|x| !x.is_finite()) {
        return Err(CopathError::Numeric(
            "non-finite value in communicator input embeddings".into(),
        ));
    }
    Ok(w_c.dot(&concat))
}

/// Intermediate values of one LSTM step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct CommStepCache {
    /// `[x; h_prev]`, the vector every gate consumed.
    pub z: Array1<f64>,
    pub c_prev: Array1<f64>,
    pub i: Array1<f64>,
    pub f: Array1<f64>,
    pub o: Array1<f64>,
    pub g: Array1<f64>,
    pub c_new: Array1<f64>,
    pub tanh_c_new: Array1<f64>,
}

/// One LSTM step: gates over `[x; h]`, cell update `c' = f∘c + i∘g`,
/// hidden output `h' = o∘tanh(c')`. Returns the new state and the cache
/// needed to run the step backwards.
pub fn comm_step(
    state: &CommState,
    x: &Array1<f64>,
    params: &CommParams,
) -> Result<(CommState, CommStepCache)> {
    if x.len() != params.d_in() {
        return Err(CopathError::InvalidInput(format!(
            "cell input has dimension {}, expected {}",
            x.len(),
            params.d_in()
        )));
    }
    if state.h.len() != params.d_h() || state.c.len() != params.d_h() {
        return Err(CopathError::InvalidInput(format!(
            "state has dimension {}/{}, expected {}",
            state.h.len(),
            state.c.len(),
            params.d_h()
        )));
    }
    if x.iter().chain(state.h.iter()).chain(state.c.iter()).any(|v| !v.is_finite()) {
        return Err(CopathError::Numeric(
            "non-finite value entering the communicator step".into(),
        ));
    }

    let z = concatenate(Axis(0), &[x.view(), state.h.view()])
        .expect("1-d concatenation cannot fail");
    let i = (params.w_i.dot(&z) + &params.b_i).mapv(logistic);
    let f = (params.w_f.dot(&z) + &params.b_f).mapv(logistic);
    let o = (params.w_o.dot(&z) + &params.b_o).mapv(logistic);
    let g = (params.w_g.dot(&z) + &params.b_g).mapv(f64::tanh);
    let c_new = &f * &state.c + &i * &g;
    let tanh_c_new = c_new.mapv(f64::tanh);
    let h_new = &o * &tanh_c_new;

    if h_new.iter().chain(c_new.iter()).any(|v| !v.is_finite()) {
        return Err(CopathError::Numeric(
            "non-finite value produced by the communicator step".into(),
        ));
    }

    let state_new = CommState {
        h: h_new,
        c: c_new.clone(),
    };
    let cache = CommStepCache {
        z,
        c_prev: state.c.clone(),
        i,
        f,
        o,
        g,
        c_new,
        tanh_c_new,
    };
    Ok((state_new, cache))
}
