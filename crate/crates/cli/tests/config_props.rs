// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use proptest::prelude::*;
use twin_core::query::RankWeights;
use twin_service::config::{Defaults, ServiceConfig, MAX_HOPS};

fn weight() -> impl Strategy<Value = f64> {
    (0u32..10_000).prop_map(|n| n as f64 / 100.0)
}

prop_compose! {
    fn valid()(
        store in "[a-z][a-z0-9/_-]{0,20}",
        port in 1u16..,
        facts in any::<bool>(),
        paranoid in any::<bool>(),
        lexicon in proptest::option::of("[a-z]{1,8}\\.lex"),
        hops in 0..=MAX_HOPS,
        impact_hops in 0..=MAX_HOPS,
        node_budget in 1usize..100_000,
        token_budget in 1usize..1_000_000,
        seeds in 1usize..50,
        w in (weight(), weight(), weight()),
    ) -> ServiceConfig {
        ServiceConfig {
            store: PathBuf::from(store),
            listen: format!("127.0.0.1:{port}"),
            extractor: if facts { "facts" } else { "python" }.into(),
            paranoid,
            lexicon: lexicon.map(PathBuf::from),
            defaults: Defaults {
                hops,
                node_budget,
                token_budget,
                seeds,
                impact_hops,
                weights: RankWeights { boundary: w.0, public: w.1, constraint_path: w.2 },
            },
            ..ServiceConfig::default()
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 512, ..ProptestConfig::default() })]

    #[test]
    fn render_then_parse_is_identity(cfg in valid()) {
        prop_assert_eq!(ServiceConfig::parse(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn out_of_range_hops_are_rejected(cfg in valid(), extra in 1usize..1000) {
        let mut bad = cfg;
        bad.defaults.hops = MAX_HOPS + extra;
        prop_assert!(ServiceConfig::parse(&bad.render()).is_err());
    }

    #[test]
    fn env_overrides_only_store_and_listen(cfg in valid(), store in "[a-z]{1,10}", listen in "[0-9.:]{3,15}") {
        let mut over = cfg.clone();
        over.apply_env(|k| match k {
            "TWIN_STORE" => Some(store.clone()),
            "TWIN_LISTEN" => Some(listen.clone()),
            _ => None,
        });
        prop_assert_eq!(&over.store, &PathBuf::from(&store));
        prop_assert_eq!(&over.listen, &listen);
        over.store = cfg.store.clone();
        over.listen = cfg.listen.clone();
        prop_assert_eq!(over, cfg);
    }
}
