use proptest::prelude::*;

use mixpath::cost::arch_cost;
use mixpath::oracle::{BenchRecord, BenchTable};
use mixpath::ranking::kendall_tau;
use mixpath::rng::stream;
use mixpath::search::{crossover, hypervolume, mutate, non_dominated_sort, pareto_front, Individual};
use mixpath::space::{sample_mask, ArchMask, CandidatePath, LayerSpec, SbnMode, SearchSpaceSpec};
use mixpath::supernet::{sbn_index, Supernet};

fn spec_strategy() -> impl Strategy<Value = SearchSpaceSpec> {
    (
        prop::collection::vec(prop::collection::vec(prop::sample::select(vec![1usize, 3, 5]), 1..4), 1..4),
        1usize..4,
        prop::sample::select(vec![SbnMode::Vanilla, SbnMode::Linear, SbnMode::Exponential]),
    )
        .prop_map(|(kernels, m, mode)| {
            let n_min = kernels.iter().map(Vec::len).min().unwrap();
            SearchSpaceSpec {
                layers: kernels
                    .into_iter()
                    .map(|ks| LayerSpec {
                        expansion: 1,
                        paths: ks.into_iter().map(CandidatePath::depthwise).collect(),
                    })
                    .collect(),
                max_paths: m.min(n_min),
                stem_channels: 4,
                sbn_mode: mode,
                ..SearchSpaceSpec::micro()
            }
        })
}

fn individuals() -> impl Strategy<Value = Vec<Individual>> {
    prop::collection::vec((0u32..20, 0u64..20), 1..30).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (a, f))| Individual::new(ArchMask(vec![i as u32 + 1]), a as f64 / 20.0, f))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_and_recombined_masks_stay_legal(spec in spec_strategy(), seed in any::<u64>()) {
        let mut rng = stream(seed, "prop.masks");
        let a = sample_mask(&spec, 0.5, &mut rng).unwrap();
        let b = sample_mask(&spec, 0.5, &mut rng).unwrap();
        prop_assert!(a.validate(&spec).is_ok());
        let child = crossover(&a, &b, &mut rng);
        prop_assert!(child.validate(&spec).is_ok());
        for (l, &bits) in child.layers().iter().enumerate() {
            prop_assert!(bits == a.layer(l) || bits == b.layer(l));
        }
        prop_assert!(mutate(&child, &spec, 0.5, 0.5, &mut rng).unwrap().validate(&spec).is_ok());
        prop_assert_eq!(mutate(&child, &spec, 0.0, 0.5, &mut rng).unwrap(), child);
    }

    #[test]
    fn every_sampled_mask_has_a_bank_entry(spec in spec_strategy(), seed in any::<u64>()) {
        let net = Supernet::new(&spec, &mut stream(seed, "prop.net")).unwrap();
        let mask = sample_mask(&spec, 0.5, &mut stream(seed, "prop.mask")).unwrap();
        for (l, block) in net.blocks.iter().enumerate() {
            let key = block.bank.key_for(mask.layer(l)).unwrap();
            prop_assert!(block.bank.get(key).is_ok());
            prop_assert_eq!(key, sbn_index(mask.layer(l), spec.sbn_mode, spec.max_paths).unwrap());
        }
    }

    #[test]
    fn checkpoint_round_trip(spec in spec_strategy(), seed in any::<u64>()) {
        let net = Supernet::new(&spec, &mut stream(seed, "prop.ckpt")).unwrap();
        let mut buf = Vec::new();
        net.save(&mut buf, "abc").unwrap();
        let (back, fp) = Supernet::load(buf.as_slice(), &spec).unwrap();
        prop_assert_eq!(fp, "abc");
        prop_assert_eq!(back, net);
    }

    #[test]
    fn costs_are_positive_and_consistent(spec in spec_strategy(), seed in any::<u64>()) {
        let mask = sample_mask(&spec, 0.5, &mut stream(seed, "prop.cost")).unwrap();
        let c = arch_cost(&spec, &mask).unwrap();
        let layers: u64 = c.layers.iter().map(|l| l.flops()).sum();
        prop_assert_eq!(c.flops, c.stem + layers + c.head);
        let net = Supernet::new(&spec, &mut stream(seed, "prop.cost.net")).unwrap();
        prop_assert_eq!(c.params, net.submodel_param_count(&mask).unwrap());
    }

    #[test]
    fn kendall_tau_symmetries(v in prop::collection::vec(0u8..6, 2..60)) {
        let a: Vec<f64> = v.iter().map(|&x| x as f64).collect();
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        match kendall_tau(&a, &a) {
            Ok(t) => {
                prop_assert!((t - 1.0).abs() < 1e-12);
                prop_assert!((kendall_tau(&a, &neg).unwrap() + 1.0).abs() < 1e-12);
            }
            Err(_) => prop_assert!(a.iter().all(|&x| x == a[0])),
        }
        let rev: Vec<f64> = a.iter().rev().copied().collect();
        let idx: Vec<f64> = (0..a.len()).map(|i| i as f64).collect();
        if let (Ok(x), Ok(y)) = (kendall_tau(&a, &idx), kendall_tau(&idx, &a)) {
            prop_assert_eq!(x, y);
            let r = kendall_tau(&rev, &idx).unwrap();
            prop_assert!((r + x).abs() < 1e-12);
        }
    }

    #[test]
    fn first_front_is_mutually_non_dominated(mut pop in individuals()) {
        let fronts = non_dominated_sort(&mut pop);
        prop_assert_eq!(fronts.iter().map(Vec::len).sum::<usize>(), pop.len());
        let first: Vec<&Individual> = fronts[0].iter().map(|&i| &pop[i]).collect();
        for x in &first {
            for y in &first {
                prop_assert!(!(x.acc >= y.acc && x.flops <= y.flops && (x.acc > y.acc || x.flops < y.flops)));
            }
        }
        prop_assert_eq!(pareto_front(&pop).len(), first.len());
    }

    #[test]
    fn dominated_points_add_no_hypervolume(pop in individuals(), extra in (0u32..20, 0u64..20)) {
        let front = pareto_front(&pop);
        let base = hypervolume(&front, 0.0, 25);
        prop_assert!((hypervolume(&pop, 0.0, 25) - base).abs() < 1e-9);
        let mut more = pop.clone();
        more.push(Individual::new(ArchMask(vec![999]), extra.0 as f64 / 20.0, extra.1));
        prop_assert!(hypervolume(&more, 0.0, 25) >= base - 1e-12);
    }

    #[test]
    fn bench_table_jsonl_round_trip(accs in prop::collection::vec(0.0f64..1.0, 1..12)) {
        let spec = SearchSpaceSpec::micro();
        let masks = mixpath::space::enumerate_space(&spec, 100_000).unwrap();
        let records: Vec<BenchRecord> = accs
            .iter()
            .zip(&masks)
            .map(|(&a, m)| {
                let c = arch_cost(&spec, m).unwrap();
                BenchRecord { mask: m.clone(), acc: a, seed_accs: vec![a], flops: c.flops, params: c.params }
            })
            .collect();
        let table = BenchTable::new("feedface".into(), records).unwrap();
        let mut buf = Vec::new();
        table.write_jsonl(&mut buf).unwrap();
        let back = BenchTable::read_jsonl(buf.as_slice()).unwrap();
        prop_assert_eq!(back, table);
    }
}
