use proptest::prelude::*;
use sqlab_core::detectors::gmm::{diagonal_queries, exhaustive_queries};
use sqlab_core::exec::{stream_rng, Exec};
use sqlab_core::models::{Covariance, GmmParams, Instance, SignSupportVector};
use sqlab_core::oracles::{AdversarialOracle, HonestOracle};
use sqlab_core::sq::{
    BoundMode, BoundedQuery, Dataset, FamilyTag, Oracle, OracleConfig, QueryKernel, Session, SparseDirection,
};
use sqlab_core::Error;

fn rows(n: usize, d: usize, seed: u64) -> Dataset {
    let null = Instance::Gmm(GmmParams::null(Covariance::identity(d)));
    null.sample(n, &mut stream_rng(seed, 0))
}

fn kernels(d: usize, w: &[f64], idx: &[usize]) -> Vec<BoundedQuery> {
    let dir = SparseDirection::new(idx.to_vec(), w.to_vec());
    let mut neg = dir.clone();
    neg.w.iter_mut().for_each(|x| *x = -*x);
    let mut out = Vec::new();
    for (k, w) in [dir.clone(), neg].into_iter().enumerate() {
        let ks = [
            QueryKernel::ProjSquare { w: w.clone(), center: 0.0, scale: 0.3, radius: 2.0 },
            QueryKernel::ProjSquare { w: w.clone(), center: 0.4, scale: 0.3, radius: 2.0 },
            QueryKernel::ProjLinear { w: w.clone(), radius: 1.5 },
        ];
        for (j, kern) in ks.into_iter().enumerate() {
            out.push(BoundedQuery::new(format!("q{k}{j}"), 2.0, FamilyTag::Custom, kern).unwrap());
        }
    }
    out.push(BoundedQuery::custom("first", 1.0, move |x| x[d - 1].tanh()).unwrap());
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn batch_matches_single_queries_bitwise(
        seed in any::<u64>(),
        n in 1usize..300,
        w in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let d = 5;
        let data = rows(n, d, seed);
        let qs = kernels(d, &w, &[0, 2, 4]);
        for exec in [Exec::Sequential, Exec::Parallel] {
            let batch = HonestOracle::new(&data).with_exec(exec).respond_batch(&qs).unwrap();
            let mut single = HonestOracle::new(&data);
            for (q, z) in qs.iter().zip(&batch) {
                prop_assert_eq!(single.respond(q).unwrap().to_bits(), z.to_bits());
            }
        }
    }

    #[test]
    fn sample_mean_is_the_row_average(seed in any::<u64>(), n in 1usize..200) {
        let d = 4;
        let data = rows(n, d, seed);
        for q in kernels(d, &[1.0, -0.5, 0.25], &[0, 1, 3]) {
            let direct: f64 = (0..n).map(|i| q.eval(&data.row(i), BoundMode::Clip).unwrap()).sum::<f64>() / n as f64;
            let mean = q.sample_mean(&data, BoundMode::Clip).unwrap();
            prop_assert!((mean - direct).abs() <= 1e-12 * (1.0 + direct.abs()), "{} {mean} {direct}", q.id());
        }
    }

    #[test]
    fn answers_respect_the_bound(seed in any::<u64>(), n in 1usize..100) {
        let d = 3;
        let data = rows(n, d, seed);
        let qs = kernels(d, &[5.0, 5.0, 5.0], &[0, 1, 2]);
        for (q, z) in qs.iter().zip(HonestOracle::new(&data).respond_batch(&qs).unwrap()) {
            prop_assert!(z.abs() <= q.bound());
        }
    }
}

fn gmm(d: usize, v: &[i8], beta: f64) -> Instance {
    let v = SignSupportVector::from_entries(v.to_vec()).unwrap();
    Instance::Gmm(GmmParams::sparse_alternative(&v, beta, 0.5, Covariance::identity(d)).unwrap())
}

#[test]
fn adversarial_null_answers_are_null_expectations() {
    let d = 6;
    let sigma = Covariance::identity(d);
    let qs = diagonal_queries(&sigma, 6.0, 500).unwrap();
    let cfg = OracleConfig::for_finite_class(0.05, 500, qs.len()).unwrap();
    let null = Instance::Gmm(GmmParams::null(sigma));
    let mut o = AdversarialOracle::new(null.clone(), null.clone(), cfg);
    for (q, z) in qs.iter().zip(o.respond_batch(&qs).unwrap()) {
        assert_eq!(z.to_bits(), sqlab_core::models::population_expectation(q, &null).unwrap().to_bits());
    }
}

#[test]
fn weak_alternative_is_indistinguishable() {
    let d = 8;
    let sigma = Covariance::identity(d);
    let qs = exhaustive_queries(d, 2, &sigma, 6.0, 1000, 1_000_000).unwrap();
    let cfg = OracleConfig::for_finite_class(0.05, 1000, qs.len()).unwrap();
    let null = Instance::Gmm(GmmParams::null(sigma));
    let run = |truth: Instance| {
        let mut o = AdversarialOracle::new(null.clone(), truth, cfg).with_exec(Exec::Sequential);
        let mut s = Session::new(&mut o, qs.len());
        s.ask_all(&qs).unwrap();
        s.into_transcript()
    };
    let t0 = run(null.clone());
    let weak = run(gmm(d, &[1, 0, 0, -1, 0, 0, 0, 0], 0.05));
    assert!(t0.bitwise_eq(&weak));
    let strong = run(gmm(d, &[1, 0, 0, -1, 0, 0, 0, 0], 20.0));
    assert!(!t0.bitwise_eq(&strong));
}

#[test]
fn session_enforces_budget() {
    let data = rows(50, 3, 1);
    let qs = kernels(3, &[1.0, 1.0, 1.0], &[0, 1, 2]);
    let mut o = HonestOracle::new(&data);
    let mut s = Session::new(&mut o, 4);
    assert!(matches!(s.ask_all(&qs), Err(Error::BudgetExhausted { budget: 4 })));
    assert_eq!(s.transcript().len(), 4);
    assert_eq!(s.remaining(), 0);
    assert!(matches!(s.ask(&qs[0]), Err(Error::BudgetExhausted { .. })));

    let mut o = HonestOracle::new(&data);
    let mut s = Session::new(&mut o, qs.len());
    let answers = s.ask_all(&qs).unwrap();
    let logged: Vec<f64> = s.transcript().responses().collect();
    assert_eq!(answers, logged);
}

#[test]
fn empty_dataset_is_rejected() {
    let data = Dataset::from_rows(&[]).unwrap();
    let q = BoundedQuery::custom("c", 1.0, |_| 0.5).unwrap();
    assert!(HonestOracle::new(&data).respond(&q).is_err());
}
