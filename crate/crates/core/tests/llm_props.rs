use std::sync::Arc;

use llmq_core::llm::{
    constraint_payload, faithful_answer, int_range_regex, validate_output, Backend, ConstraintDialect, InferenceRequest,
    MockBackend, MockConfig, MockMode, RowTag,
};
use llmq_core::sql::{OutputContract, SchemaField, SchemaFieldType};
use proptest::prelude::*;
use regex::Regex;

fn field_type() -> impl Strategy<Value = SchemaFieldType> {
    prop::sample::select(vec![SchemaFieldType::Text, SchemaFieldType::Int, SchemaFieldType::Float, SchemaFieldType::Bool])
}

fn contract() -> impl Strategy<Value = OutputContract> {
    prop_oneof![
        Just(OutputContract::FreeText),
        prop::collection::btree_set("[A-Za-z]([A-Za-z .|()*+?-]{0,7}[A-Za-z.)])?", 1..6)
            .prop_map(|s| OutputContract::choice(s).unwrap()),
        (-1000i64..1000, 0i64..500).prop_map(|(lo, span)| OutputContract::int_range(lo, lo + span).unwrap()),
        prop::collection::btree_map("[a-z]{1,6}", field_type(), 1..5).prop_map(|m| {
            OutputContract::schema(m.into_iter().map(|(name, ty)| SchemaField { name, ty }).collect()).unwrap()
        }),
    ]
}

fn request(contract: OutputContract, prompt: &str) -> InferenceRequest {
    InferenceRequest::new(1, prompt.to_string(), Arc::new(contract), RowTag { operator: 0, ordinal: 0 }, 16)
}

fn guided_regex(contract: &OutputContract) -> Regex {
    let payload = constraint_payload(contract, ConstraintDialect::GuidedChoiceRegex).unwrap();
    Regex::new(payload["guided_regex"].as_str().unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 512, ..ProptestConfig::default() })]

    #[test]
    fn faithful_answers_always_validate(c in contract(), prompt in ".{0,60}") {
        let raw = faithful_answer(&c, &prompt);
        prop_assert!(validate_output(&c, &raw).is_ok(), "{} rejected {:?}", c, raw);
    }

    #[test]
    fn mock_is_a_function_of_seed_and_prompt(
        c in contract(),
        prompt in "[a-z ]{0,40}",
        seed in any::<u64>(),
        noise in 0.0f64..1.0,
    ) {
        let make = || MockBackend::new(MockConfig { mode: MockMode::Noisy(noise), seed, ..MockConfig::default() });
        let (a, b) = (make(), make());
        let req = request(c, &prompt);
        let first = a.invoke(&req).unwrap();
        prop_assert_eq!(&first.text, &b.invoke(&req).unwrap().text);
        prop_assert_eq!(first.service_time, b.invoke(&req).unwrap().service_time);
        prop_assert_eq!(a.embed(std::slice::from_ref(&prompt)).unwrap(), b.embed(&[prompt]).unwrap());
    }

    #[test]
    fn int_range_regex_agrees_with_validation(lo in -1200i64..1200, span in 0i64..700) {
        let hi = lo + span;
        let c = OutputContract::int_range(lo, hi).unwrap();
        let re = Regex::new(&int_range_regex(lo, hi)).unwrap();
        for n in (lo - 30)..=(hi + 30) {
            let s = n.to_string();
            prop_assert_eq!(re.is_match(&s), validate_output(&c, &s).is_ok(), "{} in {}..={}", s, lo, hi);
        }
        for bad in ["", "-", "+1", "01", "-0", "1.0", " 1", "1 "] {
            prop_assert!(!re.is_match(bad), "{:?}", bad);
        }
    }

    #[test]
    fn choice_regex_agrees_with_validation(
        options in prop::collection::btree_set("[A-Za-z]([A-Za-z .|()*+?-]{0,7}[A-Za-z.)])?", 1..6),
        probes in prop::collection::vec("[A-Za-z .|()*+?-]{0,9}", 0..20),
    ) {
        let c = OutputContract::choice(options.clone()).unwrap();
        let re = guided_regex(&c);
        let mut candidates: Vec<String> = options.iter().cloned().collect();
        candidates.extend(options.iter().map(|o| format!("{o}x")));
        candidates.extend(options.iter().map(|o| o.to_lowercase()));
        candidates.extend(probes);
        for s in candidates {
            // The regex is strict; validation forgives surrounding whitespace only.
            let strict = options.contains(&s);
            prop_assert_eq!(re.is_match(&s), strict, "{:?}", s);
            if s.trim() == s {
                prop_assert_eq!(validate_output(&c, &s).is_ok(), strict, "{:?}", s);
            }
        }
    }
}

#[test]
fn padded_choice_options_are_rejected() {
    assert!(OutputContract::choice(["Yes "]).is_err());
    assert!(OutputContract::choice(["  "]).is_err());
    assert!(OutputContract::choice(["Yes", "No"]).is_ok());
}

#[test]
fn exhaustive_small_ranges() {
    for lo in -25..=25i64 {
        for hi in lo..=lo + 120 {
            let c = OutputContract::int_range(lo, hi).unwrap();
            let re = Regex::new(&int_range_regex(lo, hi)).unwrap();
            for n in -200..=200i64 {
                let s = n.to_string();
                assert_eq!(re.is_match(&s), validate_output(&c, &s).is_ok(), "{s} in {lo}..={hi}");
            }
        }
    }
}

#[test]
fn schema_dialects_describe_every_field() {
    let c = OutputContract::schema(vec![
        SchemaField { name: "score".into(), ty: SchemaFieldType::Int },
        SchemaField { name: "label".into(), ty: SchemaFieldType::Text },
    ])
    .unwrap();
    let guided = constraint_payload(&c, ConstraintDialect::GuidedChoiceRegex).unwrap();
    assert_eq!(guided["guided_json"]["required"], serde_json::json!(["score", "label"]));
    let strict = constraint_payload(&c, ConstraintDialect::JsonSchemaResponseFormat).unwrap();
    let inner = &strict["response_format"]["json_schema"]["schema"]["properties"]["value"];
    assert_eq!(inner["properties"]["score"]["type"], "integer");
    assert!(constraint_payload(&c, ConstraintDialect::None).is_err());
    assert!(constraint_payload(&OutputContract::FreeText, ConstraintDialect::None).unwrap().is_empty());
}
