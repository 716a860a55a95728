//! Closed-loop simulation consistency checks: the regime sampler against the
//! generator's stationary law, Monte Carlo against the dynamic program on a
//! fine grid, and exact reproducibility through the policy CSV round trip.

use mvregime::chain::GridSpec;
use mvregime::model::presets::{single_regime_market, two_regime_market};
use mvregime::model::{AffinePair, ControlSet, Horizon, RegimeModel, SolverConfig};
use mvregime::simulate::{mc_estimate, sample_regime_path, SimConfig};
use mvregime::solver::{read_policy_csv, solve, write_value_policy_csv};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Time-average occupancy of an asymmetric two-state chain must match the
/// stationary distribution `pi = (b, a) / (a + b)` of the generator
/// `[[-a, a], [b, -b]]`.
#[test]
fn regime_occupancy_matches_stationary_law() {
    let (a, b) = (0.3, 0.7);
    let model = RegimeModel {
        m: 2,
        d: 1,
        q: vec![-a, a, b, -b],
        g: vec![1.0, 2.0],
        sigma0: 1.0,
        r: vec![AffinePair::constant(0.0); 2],
        b: vec![vec![AffinePair::constant(0.0); 2]],
        sigma_bar: vec![vec![vec![AffinePair::constant(1.0); 2]]],
        horizon: Horizon { s: 0.0, t_end: 1.0 },
    };
    let t_end = 10_000.0;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let path = sample_regime_path(&model, 0, 0.0, t_end, &mut rng).unwrap();
    let mut time_in_zero = 0.0;
    for (k, &state) in path.states.iter().enumerate() {
        let seg_start = path.times[k];
        let seg_end = path.times.get(k + 1).copied().unwrap_or(t_end);
        if state == 0 {
            time_in_zero += seg_end - seg_start;
        }
    }
    let occupancy = time_in_zero / t_end;
    let stationary = b / (a + b);
    assert!(
        (occupancy - stationary).abs() <= 0.02,
        "occupancy {occupancy} vs stationary {stationary}"
    );
}

/// On a fine single-regime grid the dynamic-programming value at the start
/// node and the closed-loop Monte Carlo estimate of the same objective must
/// agree within three standard errors, provided essentially no paths get
/// clipped at the box edge. The chain's wealth variance carries an
/// `h1 * |b|` inflation term from the artificial diffusion, so the grid
/// here is chosen fine enough to push that bias below the sampling noise.
#[test]
fn monte_carlo_reproduces_the_dp_objective() {
    let model = single_regime_market(0.05, 0.15, 0.3, Horizon { s: 0.0, t_end: 0.25 });
    let grid = GridSpec::new(&model, 0.03125, 0.0001953125, 0.0, 2.0, None).unwrap();
    let config = SolverConfig {
        lambda: 0.3,
        kappa: 1.1,
        control_set: ControlSet::scalar(-1.0, 1.0, 5).unwrap(),
    };
    let result = solve(&model, &grid, &config).unwrap();
    let dp_value = result.value.at_start(1.0, &[1.0]).unwrap();

    let report = mc_estimate(
        &model,
        &result.policy,
        &SimConfig {
            x0: 1.0,
            p0: vec![1.0],
            n_paths: 20_000,
            seed: 31,
        },
    )
    .unwrap();
    assert!(
        report.clipped_fraction < 0.001,
        "clipping {} invalidates the comparison",
        report.clipped_fraction
    );
    let gap = (report.objective_mean - dp_value).abs();
    let tolerance = 3.0 * report.objective_ci_half_width;
    println!(
        "dp {dp_value:.6} vs mc {:.6} (gap {gap:.6}, tolerance {tolerance:.6})",
        report.objective_mean
    );
    assert!(
        gap <= tolerance,
        "dp {dp_value} vs mc {} exceeds {tolerance}",
        report.objective_mean
    );
}

/// Writing the policy to CSV, reloading it, and rerunning the Monte Carlo
/// must reproduce the original report bit for bit.
#[test]
fn policy_roundtrip_preserves_the_monte_carlo_report() {
    let model = two_regime_market();
    let grid = GridSpec::new(&model, 0.25, 0.005, 0.0, 2.0, None).unwrap();
    let config = SolverConfig {
        lambda: 0.5,
        kappa: 1.0,
        control_set: ControlSet::scalar(-1.0, 1.0, 9).unwrap(),
    };
    let result = solve(&model, &grid, &config).unwrap();
    let mut csv = Vec::new();
    write_value_policy_csv(&mut csv, &result.value, &result.policy).unwrap();
    let reloaded = read_policy_csv(
        std::io::BufReader::new(csv.as_slice()),
        grid.clone(),
        config.control_set.clone(),
        config.lambda,
        config.kappa,
        model.digest(),
    )
    .unwrap();

    let sim = SimConfig {
        x0: 1.0,
        p0: vec![0.5, 0.5],
        n_paths: 500,
        seed: 77,
    };
    let original = mc_estimate(&model, &result.policy, &sim).unwrap();
    let replayed = mc_estimate(&model, &reloaded, &sim).unwrap();
    assert_eq!(original, replayed);
    assert_eq!(original.n_paths, 500);
    assert!(original.variance > 0.0);
}
