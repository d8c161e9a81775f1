use kolmogorov::cloud::dist2;
use kolmogorov::density::{bandwidth_function, estimate_density};
use kolmogorov::kernelmat::{assemble_brute_force, assemble_tree_sweep, kernel_sum, BandwidthVector, KernelParams};
use kolmogorov::neighbors::{Query, TreeSequence};
use kolmogorov::operator::{alpha_from_c, assemble_operator, operator_bandwidths};
use kolmogorov::solver::solve_kolmogorov;
use kolmogorov::spectra::{leading_eigs, s_inner, SpectraConfig};
use kolmogorov::PointCloud;
use proptest::prelude::*;

fn cloud_strategy(max_n: usize) -> impl Strategy<Value = PointCloud> {
    (1usize..=4, 12usize..=max_n).prop_flat_map(|(m, n)| {
        prop::collection::vec(-3.0f64..3.0, n * m).prop_map(move |c| PointCloud::new(c, m).unwrap())
    })
}

fn bandwidths(n: usize, seed: u64) -> BandwidthVector {
    // Deterministic spread in [0.5, 2).
    let rho = (0..n)
        .map(|i| 0.5 + 1.5 * (((i as u64 + 1) * 2654435761 + seed) % 1000) as f64 / 1000.0)
        .collect();
    BandwidthVector::new(rho).unwrap()
}

/// Dense `L` from the definitions, no sparsity or tree search involved.
fn dense_oracle(cloud: &PointCloud, psi: &[f64], eps: f64, c: f64, beta: f64, dim: usize, delta_tol: f64) -> Vec<f64> {
    let n = cloud.len();
    let rho = operator_bandwidths(psi, beta).unwrap();
    let rho = rho.as_slice();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let v = (-dist2(cloud.point(i), cloud.point(j)) / (eps * eps * rho[i] * rho[j])).exp();
            if v > delta_tol {
                k[i * n + j] = v;
            }
        }
    }
    let alpha = alpha_from_c(c, beta, dim);
    let q: Vec<f64> = (0..n)
        .map(|i| psi[i].powf(-beta * dim as f64) * k[i * n..(i + 1) * n].iter().sum::<f64>())
        .collect();
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] /= (q[i] * q[j]).powf(alpha);
        }
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        let d: f64 = k[i * n..(i + 1) * n].iter().sum();
        let p2 = psi[i].powf(2.0 * beta);
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            l[i * n + j] = (k[i * n + j] / d - id) / (eps * eps * p2);
        }
    }
    l
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tree_sweep_equals_brute_force(
        cloud in cloud_strategy(150),
        eps in 0.05f64..0.8,
        t_frac in 0.0f64..1.0,
        tight in any::<bool>(),
        seed in 0u64..1000,
    ) {
        let n = cloud.len();
        let t = 1 + (t_frac * (n - 2) as f64) as usize;
        let seq = TreeSequence::build(&cloud, t).unwrap();
        let rho = bandwidths(n, seed);
        let params = KernelParams::new(eps, if tight { 1e-4 } else { 1e-2 }).unwrap();
        let tree = assemble_tree_sweep(&cloud, &seq, &rho, params).unwrap();
        let brute = assemble_brute_force(&cloud, &rho, params).unwrap();
        prop_assert_eq!(tree.to_dense(), brute.to_dense());
        prop_assert!(tree.is_symmetric());
        let total = kernel_sum(&cloud, &seq, &rho, params).unwrap();
        prop_assert!((total - brute.total_sum()).abs() <= 1e-12 * brute.total_sum().max(1.0));
    }

    #[test]
    fn nearest_neighbors_match_a_full_sort(cloud in cloud_strategy(120), k in 1usize..10, q in 0usize..1000) {
        let n = cloud.len();
        let k = k.min(n - 1);
        let i = q % n;
        let seq = TreeSequence::build_clamped(&cloud, 3);
        let hits = seq.k_nearest(&cloud, Query::Sample(i), k).unwrap();
        let mut all: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist2(cloud.point(i), cloud.point(j))).collect();
        all.sort_by(f64::total_cmp);
        let got: Vec<f64> = hits.iter().map(|h| h.dist2).collect();
        prop_assert_eq!(got, all[..k].to_vec());
        prop_assert!(hits.iter().all(|h| h.index != i));
    }

    #[test]
    fn operator_matches_dense_definition(
        cloud in cloud_strategy(60),
        eps in 0.3f64..1.2,
        beta in -0.6f64..0.1,
        c in 0.0f64..2.0,
    ) {
        let n = cloud.len();
        let dim = cloud.dim();
        let seq = TreeSequence::build_clamped(&cloud, 4);
        let knn = 4.min(n - 1);
        let b = bandwidth_function(&cloud, &seq, knn).unwrap();
        let dens = estimate_density(&cloud, &seq, &b, 0.8, dim, 1e-4, knn).unwrap();
        let op = assemble_operator(&cloud, &seq, &dens, eps, c, beta, 1e-4).unwrap();
        let oracle = dense_oracle(&cloud, &dens.psi, eps, c, beta, dim, 1e-4);
        let got = op.dense_l().unwrap();
        let scale = oracle.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in got.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
        }
        // Constants are in the kernel.
        let l1 = op.apply_l(&vec![1.0; n]).unwrap();
        prop_assert!(l1.iter().all(|v| v.abs() <= 1e-10 * scale));
    }
}

#[test]
fn spectral_solve_inverts_eigenvectors() {
    let cloud = kolmogorov::sampling::sample(&kolmogorov::sampling::Distribution::standard_gaussian(2), 600, 3).unwrap();
    let seq = TreeSequence::build_clamped(&cloud, 10);
    let b = bandwidth_function(&cloud, &seq, 8).unwrap();
    let dens = estimate_density(&cloud, &seq, &b, 0.4, 2, 1e-4, 8).unwrap();
    let op = assemble_operator(&cloud, &seq, &dens, 0.2, 1.0, -0.25, 1e-4).unwrap();
    let basis = leading_eigs(&op, &SpectraConfig { ell: Some(8), ..SpectraConfig::default() }).unwrap();

    for j in 0..=basis.ell {
        for k in 0..=basis.ell {
            let g = s_inner(&basis.s, &basis.phi[j], &basis.phi[k]).unwrap();
            let want = if j == k { 1.0 } else { 0.0 };
            assert!((g - want).abs() < 1e-8, "gram[{j}][{k}] = {g}");
        }
        let lphi = op.apply_l(&basis.phi[j]).unwrap();
        let res: f64 = lphi.iter().zip(&basis.phi[j]).map(|(a, p)| (a - basis.lambda[j] * p).powi(2)).sum();
        let norm: f64 = lphi.iter().map(|a| a * a).sum::<f64>().max(1.0);
        assert!((res / norm).sqrt() < 1e-6, "eigen-residual of pair {j}");
    }

    // g = φ₃ + 2φ₅ has f = φ₃/λ₃ + 2φ₅/λ₅.
    let g: Vec<f64> = basis.phi[3].iter().zip(&basis.phi[5]).map(|(a, b)| a + 2.0 * b).collect();
    let sol = solve_kolmogorov(&basis, &g).unwrap();
    for i in 0..cloud.len() {
        let want = basis.phi[3][i] / basis.lambda[3] + 2.0 * basis.phi[5][i] / basis.lambda[5];
        assert!((sol.f[i] - want).abs() < 1e-8 * (1.0 + want.abs()));
    }
}
