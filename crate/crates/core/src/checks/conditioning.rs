use nalgebra::{DMatrix, DVector};

use super::{diff, discards_signal, gram_gap, j_projector, sub_seed, CheckConfig, Property, MIN_GRAM_GAP};
use crate::conditioning::{anova_check, condition, decompose, endomorphism_reduction};
use crate::error::Result;
use crate::gaussian::Gaussian;
use crate::instances::{conditioning_instance, normal_vector, random_map, random_psd, ConditioningInstance};
use crate::oracle::{mc_independence, mc_statistic_correlation};
use crate::rng::NormalSource;
use crate::spectral::{LinearMap, RankTol, SymOperator};

const MAX_N: usize = 8;
const MC_SAMPLES: usize = 100_000;
const MC_INSTANCES: usize = 3;

pub(super) fn run(cfg: &CheckConfig) -> Vec<Property> {
    let tol = cfg.rank_tol;
    let mut src = NormalSource::new(sub_seed(cfg.seed, 2));

    let mut indep = Property::new("decomposition_independence", "|T D M^T|_max <= 1e-9 (1+|T||D|)");
    let mut recon = Property::new(
        "decomposition_reconstruction",
        "|M y + A T y + b - y| <= 1e-9 (1+|D|+|y|); skipped when the Gram spectrum of T D^1/2 has relative gap \
         below 1e-4 or its cutoff discards a direction mapped above round-off",
    );
    let mut anova = Property::new("anova_identity", "residual <= 1e-9 (1+|D|)");
    let mut reduction = Property::new(
        "endomorphism_equivalence",
        "condition(T) and condition(T^T T) gain, covariance and mean within 1e-9 (1+|D|); skipped when \
         T D^1/2 and T^T T D^1/2 differ in numerical rank, the latter's Gram spectrum has relative gap below 1e-4, \
         or the cutoff discards a direction that T D^1/2 maps above round-off",
    )
    .rank_dependent();
    let mut cov_gain = Property::new("covariance_gain_relation", "G = (I - K) D within 1e-9 (1+|D|), G positive");
    let mut char_fn = Property::new("char_fn_adjoint", "|phi_{S#g}(t) - phi_g(S^T t)| <= 1e-12");
    let mut blocks = Property::new("joint_marginal_blocks", "joint blocks equal pushforward covariances exactly");
    let mut symmetry = Property::new("independence_symmetry", "independence_test(S,T) == independence_test(T,S)");
    let mut support = Property::new("sample_support", "|P_N(D)(row - mu)| <= 1e-10 (1+|D|^1/2)");

    for _ in 0..cfg.trials {
        let inst = conditioning_instance(&mut src, MAX_N, tol);
        let g = &inst.gaussian;
        let scale = 1.0 + g.cov().norm();

        indep.outcome(decompose(g, &inst.map).map(|d| {
            (d.independence_residual(), 1e-9 * (1.0 + inst.map.norm() * g.cov().norm()))
        }));
        let s = inst.map.matrix() * g.cov().sqrt().expect("positive").matrix();
        let well_conditioned = gram_gap(&s, tol) >= MIN_GRAM_GAP && !discards_signal(&s, tol);
        recon.outcome_if(well_conditioned, || {
            let d = decompose(g, &inst.map)?;
            let y = &inst.realization;
            let back = d.reconstruct(&inst.observation())?;
            let full = d.independent_part() * y + back;
            Ok(((full - y).amax(), 1e-9 * (scale + y.amax())))
        });
        anova.outcome(anova_check(g, &inst.map).map(|r| (r.residual, 1e-9 * scale)));
        match reduction_residual(&inst) {
            Ok(Some(r)) => reduction.record(r, 1e-9 * scale),
            Ok(None) => reduction.skip(),
            Err(e) => reduction.fail_with(&e),
        }
        cov_gain.outcome((|| {
            let law = condition(g, &inst.map)?;
            law.cov().check_psd()?;
            let n = g.dim();
            let expected = (DMatrix::identity(n, n) - law.gain()) * g.cov().matrix();
            Ok((diff(law.cov().matrix(), &expected), 1e-9 * scale))
        })());

        gaussian_properties(&mut src, tol, &mut char_fn, &mut blocks, &mut symmetry, &mut support);
    }

    let mut mc_indep = Property::new("monte_carlo_independence", "max |corr(MY, TY)| <= 4/sqrt(N), N = 1e5");
    let mut iterated = Property::new(
        "iterated_expectation",
        "mean of E(Y|TY) over 1e5 draws within 5/sqrt(N) of mu (max diag(D) = 1)",
    );
    for k in 0..MC_INSTANCES {
        let n = 2 + k % 3;
        let (g, t) = normalized_instance(&mut src, n, tol);
        mc_indep.outcome((|| {
            let d = decompose(&g, &t)?;
            let m = LinearMap::new(d.independent_part().clone())?;
            let corr = mc_independence(&g, &m, &t, MC_SAMPLES, sub_seed(cfg.seed, 100 + k as u64))?;
            Ok((corr, 4.0 / (MC_SAMPLES as f64).sqrt()))
        })());
        iterated.outcome((|| {
            let law = condition(&g, &t)?;
            let ys = g.sample(MC_SAMPLES, sub_seed(cfg.seed, 200 + k as u64))?;
            // E(Y|TY) is affine in Y, so averaging commutes with evaluation.
            let ybar = ys.row_mean().transpose();
            let dev = (law.evaluate(&ybar)?.mean() - g.mean()).amax();
            Ok((dev, 5.0 / (MC_SAMPLES as f64).sqrt()))
        })());
    }

    let mut remark_iid = Property::new(
        "mean_variance_independence",
        "P_J Y and (I - P_J) Y independent under sigma^2 I and [[2,1],[1,2]]; corr(mean, var) <= 4/sqrt(1e5)",
    );
    mean_variance_scenario(cfg.seed, &mut remark_iid);
    let mut sufficiency = Property::new(
        "sufficiency_of_the_mean",
        "given the sample mean: gain P_J and covariance sigma^2 (I - P_J) within 1e-10, identical across theta to 1e-12",
    );
    sufficiency_scenario(&mut sufficiency);

    vec![
        indep, recon, anova, reduction, cov_gain, char_fn, blocks, symmetry, support, mc_indep, iterated,
        remark_iid, sufficiency,
    ]
}

// Squaring `T` squares its condition number, so the projector of the reduced
// map loses accuracy like `100 eps / gap` and small singular values can fall
// below the rank cutoff; such instances are skipped.
fn reduction_residual(inst: &ConditioningInstance) -> Result<Option<f64>> {
    let g = &inst.gaussian;
    let tol = g.rank_tol();
    let root = g.cov().sqrt()?;
    let reduced = endomorphism_reduction(&inst.map);
    let s_hat = reduced.matrix() * root.matrix();
    let s = inst.map.matrix() * root.matrix();
    let rank = |m: &DMatrix<f64>| LinearMap::new(m.clone()).map(|l| l.gram(tol).rank());
    if rank(&s_hat)? != rank(&s)? || gram_gap(&s_hat, tol) < MIN_GRAM_GAP || discards_signal(&s, tol) {
        return Ok(None);
    }
    let a = condition(g, &inst.map)?;
    let b = condition(g, &reduced)?;
    let y = &inst.realization;
    let r = [
        diff(a.gain(), b.gain()),
        diff(a.cov().matrix(), b.cov().matrix()),
        (a.evaluate(y)?.mean() - b.evaluate(y)?.mean()).amax(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(Some(r))
}

fn gaussian_properties(
    src: &mut NormalSource,
    tol: RankTol,
    char_fn: &mut Property,
    blocks: &mut Property,
    symmetry: &mut Property,
    support: &mut Property,
) {
    let n = src.int_in(1, MAX_N);
    let rank = src.int_in(0, n);
    let g = Gaussian::new(normal_vector(src, n), random_psd(src, n, rank)).expect("positive").with_rank_tol(tol);
    let (p, q) = (src.int_in(1, MAX_N), src.int_in(1, MAX_N));
    let (rs, rt) = (src.int_in(0, p.min(n)), src.int_in(0, q.min(n)));
    let s = random_map(src, p, n, rs);
    let t = random_map(src, q, n, rt);

    let u = normal_vector(src, p) * 0.5;
    char_fn.outcome((|| {
        let lhs = g.pushforward(&s)?.char_fn(&u)?;
        let rhs = g.char_fn(&(s.matrix().transpose() * &u))?;
        Ok(((lhs - rhs).norm(), 1e-12))
    })());

    match (g.joint(&s, &t), g.pushforward(&s), g.pushforward(&t)) {
        (Ok(j), Ok(ps), Ok(pt)) => {
            blocks.flag(j.block(0, 0) == *ps.cov().matrix() && j.block(1, 1) == *pt.cov().matrix())
        }
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => blocks.fail_with(&e),
    }

    match (g.independence_test(&s, &t), g.independence_test(&t, &s)) {
        (Ok(a), Ok(b)) => symmetry.flag(a.independent == b.independent),
        (Err(e), _) | (_, Err(e)) => symmetry.fail_with(&e),
    }

    let seed = src.int_in(0, 1 << 30) as u64;
    support.outcome((|| {
        let rows = g.sample(50, seed)?;
        let null = g.cov().null_projector();
        let allowed = 1e-10 * (1.0 + g.cov().norm().sqrt());
        let worst = rows
            .row_iter()
            .map(|r| null.apply(&(r.transpose() - g.mean())).norm())
            .fold(0.0, f64::max);
        Ok((worst, allowed))
    })());
}

// Covariance scaled so the largest variance is 1, which fixes the Monte Carlo
// bands. `T` has fewer rows than `rank(D)`, so `M` is not zero.
fn normalized_instance(src: &mut NormalSource, n: usize, tol: RankTol) -> (Gaussian, LinearMap) {
    let rank = if n == 2 { 2 } else { src.int_in(n - 1, n) };
    let mut cov = random_psd(src, n, rank).into_matrix();
    let top = cov.diagonal().amax();
    cov /= top;
    let cov = SymOperator::new(cov).expect("finite").with_rank_tol(tol);
    let g = Gaussian::new(normal_vector(src, n), cov).expect("positive");
    let m = src.int_in(1, rank - 1);
    (g, random_map(src, m, n, m))
}

fn mean_variance_scenario(seed: u64, prop: &mut Property) {
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let var = |x: &[f64]| {
        let m = mean(x);
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
    };
    let sigma2 = 1.7_f64.powi(2);
    let iid = Gaussian::new(DVector::from_element(5, 2.0), SymOperator::new(DMatrix::identity(5, 5) * sigma2).unwrap())
        .unwrap();
    let pair = Gaussian::from_parts(&[2.0, 2.0], &[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
    for (k, g) in [iid, pair].iter().enumerate() {
        let n = g.dim();
        prop.outcome((|| {
            let p = LinearMap::new(j_projector(n))?;
            let q = LinearMap::new(DMatrix::identity(n, n) - j_projector(n))?;
            let test = g.independence_test(&p, &q)?;
            Ok((test.residual, test.tolerance))
        })());
        prop.outcome(
            mc_statistic_correlation(g, MC_SAMPLES, sub_seed(seed, 300 + k as u64), mean, var)
                .map(|c| (c, 4.0 / (MC_SAMPLES as f64).sqrt())),
        );
    }
}

fn sufficiency_scenario(prop: &mut Property) {
    let n = 5;
    let sigma2 = 1.3_f64.powi(2);
    let cov = SymOperator::new(DMatrix::identity(n, n) * sigma2).unwrap();
    let t = LinearMap::new(j_projector(n) / n as f64).unwrap();
    let expected_cov = (DMatrix::identity(n, n) - j_projector(n)) * sigma2;
    let mut first: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    for theta in [-5.0, 0.0, 5.0] {
        let g = Gaussian::new(DVector::from_element(n, theta), cov.clone()).unwrap();
        match condition(&g, &t) {
            Ok(law) => {
                prop.record(diff(law.gain(), &j_projector(n)), 1e-10);
                prop.record(diff(law.cov().matrix(), &expected_cov), 1e-10);
                match &first {
                    None => first = Some((law.gain().clone(), law.cov().matrix().clone())),
                    Some((k0, g0)) => {
                        prop.record(diff(law.gain(), k0).max(diff(law.cov().matrix(), g0)), 1e-12);
                    }
                }
            }
            Err(e) => prop.fail_with(&e),
        }
    }
}
