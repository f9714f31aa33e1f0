//! Construction of the 1D-infinite chains for Elastic-First and
//! Inelastic-First, and the mean response times solved from them.
//!
//! Under EF the inelastic class is starved exactly while elastic jobs are
//! present; that stretch is an M/M/1 busy period with arrival rate
//! `lambda_E` and service rate `k mu_E`, replaced here by a fitted Coxian.
//! Levels count inelastic jobs; phases are {serving} + Coxian phases.
//!
//! Under IF the elastic class is starved exactly while at least `k`
//! inelastic jobs are present; the excursion from `k` back down to `k - 1`
//! inelastic jobs is an M/M/1 busy period with arrival rate `lambda_I` and
//! service rate `k mu_I`. Levels count elastic jobs; phases are the
//! inelastic counts `0..k-1` + Coxian phases.

use nalgebra::DMatrix;

use super::qbd::{solve_qbd, LevelBlocks, QbdBlocks};
use super::{
    busy_period_moments, fit_coxian, mm1_mean_response, mmk_mean_response, AnalyticError,
    CoxianPhases, QBD_MAX_ITER, QBD_TOL,
};
use crate::domain::{load, ParamsError, SystemParams};

/// Mean response times: overall and per class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseTimes {
    /// Arrival-rate-weighted mean over both classes.
    pub t: f64,
    pub t_i: f64,
    pub t_e: f64,
}

fn weighted(params: &SystemParams, t_i: f64, t_e: f64) -> ResponseTimes {
    let lambda = params.lambda_i + params.lambda_e;
    let t = if lambda > 0.0 {
        (params.lambda_i * t_i + params.lambda_e * t_e) / lambda
    } else {
        0.0
    };
    ResponseTimes { t, t_i, t_e }
}

fn require_stable(params: &SystemParams) -> Result<(), AnalyticError> {
    let rho = load(params);
    if rho < 1.0 {
        Ok(())
    } else {
        Err(AnalyticError::Params(ParamsError::Overloaded { rho }))
    }
}

/// The chain for Elastic-First, with levels counting inelastic jobs.
///
/// Phase 0 is "serving" (no elastic jobs; `min(i, k)` inelastic jobs in
/// service); the remaining phases track the fitted elastic busy period,
/// during which no inelastic job is served. Boundary levels are `0..=k`;
/// levels beyond `k` repeat.
pub fn build_ef_chain(params: &SystemParams) -> Result<QbdBlocks, AnalyticError> {
    require_stable(params)?;
    let k = params.kf();
    let coxian = fit_coxian(busy_period_moments(params.lambda_e, k * params.mu_e)?)?;
    Ok(assemble_ef(params, &coxian))
}

fn assemble_ef(params: &SystemParams, coxian: &CoxianPhases) -> QbdBlocks {
    let n_phases = coxian.len();
    let m = 1 + n_phases;
    let k = params.kf();

    let level_blocks = |service: f64| -> LevelBlocks {
        let up = DMatrix::from_diagonal_element(m, m, params.lambda_i);
        let mut down = DMatrix::zeros(m, m);
        down[(0, 0)] = service;
        let mut local = DMatrix::zeros(m, m);
        local[(0, 0)] = -(params.lambda_i + params.lambda_e + service);
        if params.lambda_e > 0.0 {
            local[(0, 1)] = params.lambda_e;
        }
        for (p, phase) in coxian.phases().iter().enumerate() {
            let row = 1 + p;
            local[(row, row)] = -(params.lambda_i + phase.rate);
            let continue_rate = phase.rate * phase.continue_probability;
            if continue_rate > 0.0 {
                local[(row, row + 1)] = continue_rate;
            }
            local[(row, 0)] = phase.rate * (1.0 - phase.continue_probability);
        }
        LevelBlocks { up, local, down }
    };

    let boundary = (0..=params.k)
        .map(|i| level_blocks(f64::from(i).min(k) * params.mu_i))
        .collect();
    let repeating = level_blocks(k * params.mu_i);
    QbdBlocks { boundary, up: repeating.up, local: repeating.local, down: repeating.down }
}

/// The chain for Inelastic-First, with levels counting elastic jobs.
///
/// Phases `0..k-1` are the inelastic count (the elastic head job runs on
/// the `k - i` leftover servers); the remaining phases track the fitted
/// inelastic busy period (`i >= k`, elastic starved). Only level 0 differs
/// from the repeating structure: with no elastic job there is no
/// level-down transition.
pub fn build_if_chain(params: &SystemParams) -> Result<QbdBlocks, AnalyticError> {
    require_stable(params)?;
    let k = params.kf();
    let coxian = fit_coxian(busy_period_moments(params.lambda_i, k * params.mu_i)?)?;
    Ok(assemble_if(params, &coxian))
}

fn assemble_if(params: &SystemParams, coxian: &CoxianPhases) -> QbdBlocks {
    let serving = params.k as usize;
    let n_phases = coxian.len();
    let m = serving + n_phases;
    let k = params.kf();

    // Phase dynamics shared by every level; only the elastic departure
    // (the level-down block) differs between level 0 and the rest.
    let mut moves = DMatrix::zeros(m, m);
    for i in 0..serving {
        if params.lambda_i > 0.0 {
            // Inelastic arrival: next count, or into the busy period at k-1.
            moves[(i, i + 1)] = params.lambda_i;
        }
        if i > 0 {
            moves[(i, i - 1)] = i as f64 * params.mu_i;
        }
    }
    for (p, phase) in coxian.phases().iter().enumerate() {
        let row = serving + p;
        let continue_rate = phase.rate * phase.continue_probability;
        if continue_rate > 0.0 {
            moves[(row, row + 1)] = continue_rate;
        }
        moves[(row, serving - 1)] += phase.rate * (1.0 - phase.continue_probability);
    }

    let elastic_rate =
        |phase: usize| if phase < serving { (k - phase as f64) * params.mu_e } else { 0.0 };

    let blocks_for = |with_departure: bool| -> LevelBlocks {
        let up = DMatrix::from_diagonal_element(m, m, params.lambda_e);
        let mut down = DMatrix::zeros(m, m);
        let mut local = moves.clone();
        for p in 0..m {
            let dep = if with_departure { elastic_rate(p) } else { 0.0 };
            down[(p, p)] = dep;
            let out: f64 = (0..m).filter(|&q| q != p).map(|q| moves[(p, q)]).sum();
            local[(p, p)] = -(params.lambda_e + out + dep);
        }
        LevelBlocks { up, local, down }
    };

    let level0 = blocks_for(false);
    let repeating = blocks_for(true);
    QbdBlocks {
        boundary: vec![level0],
        up: repeating.up,
        local: repeating.local,
        down: repeating.down,
    }
}

/// Mean response times under Elastic-First.
///
/// The elastic class sees an M/M/1 with service rate `k mu_E`; the
/// inelastic mean count comes from the solved chain and Little's law.
pub fn mean_response_ef(params: &SystemParams) -> Result<ResponseTimes, AnalyticError> {
    let blocks = build_ef_chain(params)?;
    let t_e = if params.lambda_e > 0.0 {
        mm1_mean_response(params.lambda_e, params.kf() * params.mu_e)?
    } else {
        0.0
    };
    let t_i = if params.lambda_i > 0.0 {
        let solution = solve_qbd(&blocks, QBD_TOL, QBD_MAX_ITER)?;
        solution.expected_level() / params.lambda_i
    } else {
        0.0
    };
    Ok(weighted(params, t_i, t_e))
}

/// Mean response times under Inelastic-First.
///
/// The inelastic class sees an M/M/k; the elastic mean count comes from the
/// solved chain and Little's law.
pub fn mean_response_if(params: &SystemParams) -> Result<ResponseTimes, AnalyticError> {
    let blocks = build_if_chain(params)?;
    let t_i = if params.lambda_i > 0.0 {
        mmk_mean_response(params.lambda_i, params.mu_i, params.k)?
    } else {
        0.0
    };
    let t_e = if params.lambda_e > 0.0 {
        let solution = solve_qbd(&blocks, QBD_TOL, QBD_MAX_ITER)?;
        solution.expected_level() / params.lambda_e
    } else {
        0.0
    };
    Ok(weighted(params, t_i, t_e))
}
