mod common;

use llmq_core::sql::{
    bind, infer_contract, parse, BindOptions, ContractContext, ContractDefaults, InvocationSite, OutputContract,
};
use llmq_core::sql::ast::Literal;
use llmq_core::{fixtures, suite, Engine, EngineConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn engine() -> Engine {
    let (engine, _) = common::mock_engine(EngineConfig::default());
    let (m, r) = fixtures::movies_reviews(40, 1);
    engine.catalog().register(m);
    engine.catalog().register(r);
    engine.catalog().register(fixtures::squad(20, 5, 1));
    engine.build_index("squad", "context").unwrap();
    engine
}

#[test]
fn suite_queries_print_back_to_the_same_tree() {
    for (name, sql) in suite::QUERIES {
        let ast = parse(sql).unwrap_or_else(|e| panic!("{name}: {e}"));
        let printed = ast.to_string();
        assert_eq!(parse(&printed).unwrap(), ast, "{name}: {printed}");
        assert_eq!(parse(&printed).unwrap().to_string(), printed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 512, ..ProptestConfig::default() })]

    #[test]
    fn generated_queries_round_trip_and_bind(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sql = common::random_query(&mut rng);
        let ast = parse(&sql).map_err(|e| TestCaseError::fail(format!("{sql}: {e}")))?;
        let printed = ast.to_string();
        prop_assert_eq!(&parse(&printed).unwrap(), &ast);

        let engine = engine();
        let catalog = engine.catalog();
        let options = BindOptions::default();
        let bound = bind(&ast, catalog, &options).map_err(|e| TestCaseError::fail(format!("{sql}: {e}")))?;
        let again = bind(&parse(&printed).unwrap(), catalog, &options).unwrap();
        // Every call carries a contract, and inference is a function of the text.
        let contracts: Vec<String> = bound.invocations.iter().map(|i| i.contract.to_string()).collect();
        let contracts_again: Vec<String> = again.invocations.iter().map(|i| i.contract.to_string()).collect();
        prop_assert_eq!(contracts, contracts_again);
        for inv in &bound.invocations {
            let ok = match inv.site {
                InvocationSite::WherePredicate => matches!(&inv.contract, OutputContract::Choice { options } if options == &["Yes", "No"]),
                InvocationSite::AggregateInput => inv.contract == OutputContract::IntRange { lo: 0, hi: 5 },
                InvocationSite::SelectProjection | InvocationSite::RagGeneration => inv.contract == OutputContract::FreeText,
            };
            prop_assert!(ok, "{:?} got {}", inv.site, inv.contract);
        }
    }

    #[test]
    fn random_bytes_never_panic(input in "[ -~\n]{0,80}") {
        let _ = parse(&input);
    }

    #[test]
    fn string_literals_round_trip(s in "[ -~]{0,30}") {
        let sql = format!("SELECT r.review_content FROM reviews r WHERE r.review_type = '{}'", s.replace('\'', "''"));
        let ast = parse(&sql).unwrap();
        prop_assert_eq!(parse(&ast.to_string()).unwrap(), ast);
    }

    #[test]
    fn equality_contracts_are_two_way_choices(lit in "[A-Za-z]{1,10}") {
        let defaults = ContractDefaults::default();
        let c = infer_contract(None, &ContractContext::EqualityWith(Literal::Str(lit.clone())), &defaults).unwrap();
        let expected = if lit == "Yes" { "No".to_string() } else { defaults.predicate_complement.clone() };
        match c {
            OutputContract::Choice { options } if lit != expected => {
                prop_assert_eq!(options, vec![lit, expected]);
            }
            other => prop_assert!(lit == expected, "{other:?}"),
        }
    }
}
