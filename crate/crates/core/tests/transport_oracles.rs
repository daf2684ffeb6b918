use mfkernels::kernels::BaseKernel;
use mfkernels::measures::DiscreteMeasure;
use mfkernels::transport::{w1_1d, w1_bruteforce, w1_exact, GroundMetric};
use proptest::prelude::*;

fn measure(dim: usize, max_atoms: usize) -> impl Strategy<Value = DiscreteMeasure> {
    (1..=max_atoms).prop_flat_map(move |n| {
        (
            prop::collection::vec(0.0..1.0f64, n * dim),
            prop::collection::vec(0.05..1.0f64, n),
        )
            .prop_map(move |(atoms, raw)| {
                let total: f64 = raw.iter().sum();
                let mut w: Vec<f64> = raw.iter().map(|r| r / total).collect();
                let drift: f64 = 1.0 - w.iter().sum::<f64>();
                w[0] += drift;
                DiscreteMeasure::new(dim, atoms, w).unwrap()
            })
    })
}

fn metrics() -> impl Strategy<Value = GroundMetric> {
    prop_oneof![
        Just(GroundMetric::Euclidean),
        (0.05..2.0f64).prop_map(|g| GroundMetric::Kernel { base: BaseKernel::gaussian(g) }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn exact_matches_bruteforce(mu in measure(2, 4), nu in measure(2, 4), metric in metrics()) {
        let (exact, plan) = w1_exact(&mu, &nu, &metric).unwrap();
        let bf = w1_bruteforce(&mu, &nu, &metric).unwrap();
        prop_assert!((exact - bf).abs() <= 1e-9, "exact {} brute {}", exact, bf);
        prop_assert!(plan.marginal_error(&mu, &nu) <= 1e-9);
        prop_assert!(plan.coupling().iter().all(|&p| p >= 0.0));
        let cost = metric.cost_matrix(&mu, &nu).unwrap();
        let recomputed: f64 = plan.coupling().iter().zip(&cost).map(|(p, c)| p * c).sum();
        prop_assert!((recomputed - plan.cost()).abs() <= 1e-9);
    }

    #[test]
    fn exact_matches_closed_form_1d(mu in measure(1, 12), nu in measure(1, 12)) {
        let exact = w1_exact(&mu, &nu, &GroundMetric::Euclidean).unwrap().0;
        let cf = w1_1d(&mu, &nu).unwrap();
        prop_assert!((exact - cf).abs() <= 1e-9, "exact {} closed form {}", exact, cf);
    }

    #[test]
    fn metric_axioms(a in measure(2, 8), b in measure(2, 8), c in measure(2, 8), metric in metrics()) {
        let d = |x: &DiscreteMeasure, y: &DiscreteMeasure| w1_exact(x, y, &metric).unwrap().0;
        let (ab, ba, bc, ac) = (d(&a, &b), d(&b, &a), d(&b, &c), d(&a, &c));
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-10);
        prop_assert!(d(&a, &a).abs() <= 1e-12);
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn deterministic_plans(mu in measure(2, 10), nu in measure(2, 10)) {
        let (c1, p1) = w1_exact(&mu, &nu, &GroundMetric::Euclidean).unwrap();
        let (c2, p2) = w1_exact(&mu, &nu, &GroundMetric::Euclidean).unwrap();
        prop_assert_eq!(c1.to_bits(), c2.to_bits());
        prop_assert_eq!(p1, p2);
    }
}

#[test]
fn larger_instances_against_closed_form() {
    use mfkernels::measures::SamplerSpec;
    let s = SamplerSpec::Uniform { lower: vec![0.0], upper: vec![1.0] };
    for seed in 0..5 {
        let mu = s.sample_configuration(200, seed).unwrap().empirical_measure();
        let nu = s.sample_configuration(150, seed + 100).unwrap().empirical_measure();
        let exact = w1_exact(&mu, &nu, &GroundMetric::Euclidean).unwrap().0;
        let cf = w1_1d(&mu, &nu).unwrap();
        assert!((exact - cf).abs() <= 1e-9, "seed {seed}: {exact} vs {cf}");
    }
}
