use llmq_core::{suite, Catalog, Engine, EngineConfig};

fn main() {
    let rows: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let engine = Engine::new(EngineConfig::default(), Catalog::new()).expect("engine");
    engine.load_fixtures(rows).expect("fixtures");
    for (name, sql) in suite::QUERIES {
        println!("-- {name} canonical");
        print!("{}", engine.explain(sql, true).expect("explain"));
        println!("-- {name}");
        print!("{}", engine.explain(sql, false).expect("explain"));
    }
}
