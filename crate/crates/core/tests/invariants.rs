use gauss_ramsey::estimators::{clique_counts, estimate_edge_density, CliqueQuery};
use gauss_ramsey::geom_graph::{PerfectSpec, Sampler};
use gauss_ramsey::stats::proportion_se;
use gauss_ramsey::Color;
use proptest::prelude::*;

fn query(r: usize, d: usize, p: f64, sampler: Sampler) -> CliqueQuery {
    CliqueQuery {
        r,
        d,
        p,
        sampler,
        perfect: None,
    }
}

#[test]
fn samplers_agree_on_small_cliques() {
    let trials = 40_000usize;
    let n = trials as u64;
    let mut seed = 10;
    for r in 2..=4 {
        for &d in &[64usize, 256] {
            for &p in &[0.38, 0.45] {
                seed += 2;
                let a = clique_counts(&query(r, d, p, Sampler::Direct), trials, seed).unwrap();
                let b = clique_counts(&query(r, d, p, Sampler::Bartlett), trials, seed + 1).unwrap();
                for color in [Color::Red, Color::Blue] {
                    let (x, y) = (a.successes(color, false), b.successes(color, false));
                    let se = (proportion_se(x, n).powi(2) + proportion_se(y, n).powi(2))
                        .sqrt()
                        .max(1.0 / trials as f64);
                    let gap = (x as f64 - y as f64).abs() / trials as f64;
                    assert!(gap <= 4.5 * se, "r={r} d={d} p={p} {color}: {x} vs {y}");
                }
            }
        }
    }
}

fn run_in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let q = query(4, 100, 0.4, Sampler::Bartlett);
    let one = run_in_pool(1, || clique_counts(&q, 5000, 77).unwrap());
    let four = run_in_pool(4, || clique_counts(&q, 5000, 77).unwrap());
    assert_eq!(one, four);
    let one = run_in_pool(1, || estimate_edge_density(40, 64, 0.4, 50, 78).unwrap());
    let three = run_in_pool(3, || estimate_edge_density(40, 64, 0.4, 50, 78).unwrap());
    assert_eq!(one.successes, three.successes);
    assert_eq!(one.point.to_bits(), three.point.to_bits());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn restricted_counts_never_exceed_unrestricted(
        r in 2usize..6,
        d in 64usize..400,
        p in 0.3f64..0.5,
        seed in any::<u64>(),
        bartlett in any::<bool>(),
    ) {
        let sampler = if bartlett { Sampler::Bartlett } else { Sampler::Direct };
        let spec = PerfectSpec::with_alpha(2.0, p, r.min(3), d, 0.3 * (d as f64).powf(0.25)).unwrap();
        let q = CliqueQuery { perfect: Some(spec), ..query(r, d, p, sampler) };
        let k = clique_counts(&q, 300, seed).unwrap();
        prop_assert!(k.red_perfect <= k.red);
        prop_assert!(k.blue_perfect <= k.blue);
        prop_assert!(k.red_perfect <= k.perfect && k.blue_perfect <= k.perfect);
        prop_assert!(k.red + k.blue <= k.trials);
    }

    #[test]
    fn clique_counts_do_not_increase_with_size(
        d in 16usize..200,
        p in 0.2f64..0.5,
        seed in any::<u64>(),
    ) {
        // With shared streams the first r vectors of an (r+1)-sample are an
        // r-sample, so a monochromatic K_{r+1} contains a monochromatic K_r.
        let mut last: Option<(u64, u64)> = None;
        for r in 2..=6 {
            let k = clique_counts(&query(r, d, p, Sampler::Direct), 200, seed).unwrap();
            if let Some((red, blue)) = last {
                prop_assert!(k.red <= red && k.blue <= blue, "r={}", r);
            }
            last = Some((k.red, k.blue));
        }
    }
}
