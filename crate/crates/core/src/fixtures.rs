//! Seeded synthetic tables shaped like the movie review and reading
//! comprehension datasets the example queries expect.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{Column, Schema, Table};
use crate::value::{DataType, Value};

const ADJECTIVES: &[&str] = &[
    "quiet", "restless", "brilliant", "forgotten", "tender", "violent", "luminous", "awkward", "sprawling", "gentle",
    "haunted", "clever", "bitter", "joyful", "stubborn", "fragile",
];
const NOUNS: &[&str] = &[
    "detective", "orchard", "river", "robot", "widow", "village", "orchestra", "pilot", "lighthouse", "thief",
    "garden", "astronaut", "teacher", "dragon", "island", "family",
];
const VERBS: &[&str] = &[
    "searches for", "escapes from", "returns to", "defends", "betrays", "rebuilds", "discovers", "abandons",
    "protects", "confronts",
];
const OPINIONS: &[&str] = &[
    "A delight from start to finish.",
    "The pacing drags in the second act.",
    "Wonderful performances carry a thin script.",
    "Too violent for my taste.",
    "Gorgeous to look at, hollow at the core.",
    "My kids loved every minute.",
    "An instant classic.",
    "Forgettable and overlong.",
    "Sharp writing and a warm heart.",
    "The ending undoes everything before it.",
];

fn phrase(rng: &mut ChaCha8Rng) -> String {
    format!(
        "a {} {} {} the {} {}",
        ADJECTIVES.choose(rng).unwrap(),
        NOUNS.choose(rng).unwrap(),
        VERBS.choose(rng).unwrap(),
        ADJECTIVES.choose(rng).unwrap(),
        NOUNS.choose(rng).unwrap()
    )
}

fn movie_schema() -> Schema {
    Schema::new(vec![
        Column::new("rotten_tomatoes_link", DataType::Text),
        Column::new("movie_title", DataType::Text),
        Column::new("movie_info", DataType::Text),
    ])
}

fn review_schema() -> Schema {
    Schema::new(vec![
        Column::new("rotten_tomatoes_link", DataType::Text),
        Column::new("review_type", DataType::Text),
        Column::new("review_content", DataType::Text),
    ])
}

fn squad_schema() -> Schema {
    Schema::new(vec![
        Column::new("id", DataType::Int64),
        Column::new("title", DataType::Text),
        Column::new("context", DataType::Text),
        Column::new("question", DataType::Text),
        Column::new("is_impossible", DataType::Bool),
    ])
}

/// `movies` and `reviews` tables. About four reviews per movie; exactly
/// `reviews / 2` reviews are "Fresh" and the rest "Rotten". Every review
/// joins to exactly one movie.
pub fn movies_reviews(reviews: usize, seed: u64) -> (Table, Table) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let movie_count = reviews.div_ceil(4);
    let movies: Vec<Vec<Value>> = (0..movie_count)
        .map(|i| {
            let info = format!("{}. Then {}, until {}.", capitalize(&phrase(&mut rng)), phrase(&mut rng), phrase(&mut rng));
            vec![
                Value::text(format!("m/movie_{i:05}")),
                Value::text(format!("The {} {} {}", ADJECTIVES.choose(&mut rng).unwrap(), NOUNS.choose(&mut rng).unwrap(), i)),
                Value::text(info),
            ]
        })
        .collect();
    let mut fresh: Vec<bool> = (0..reviews).map(|i| i < reviews / 2).collect();
    fresh.shuffle(&mut rng);
    let rows: Vec<Vec<Value>> = fresh
        .into_iter()
        .map(|is_fresh| {
            let movie = rng.random_range(0..movie_count);
            let content = format!("{} It feels like {}.", OPINIONS.choose(&mut rng).unwrap(), phrase(&mut rng));
            vec![
                Value::text(format!("m/movie_{movie:05}")),
                Value::text(if is_fresh { "Fresh" } else { "Rotten" }),
                Value::text(content),
            ]
        })
        .collect();
    (
        Table::new("movies", movie_schema(), movies).expect("fixture schema"),
        Table::new("reviews", review_schema(), rows).expect("fixture schema"),
    )
}

/// `squad` table with `answerable` rows where `is_impossible` is false and
/// `impossible` rows where it is true, shuffled. Each row has its own
/// context; the question reuses words from it.
pub fn squad(answerable: usize, impossible: usize, seed: u64) -> Table {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5a0d);
    let mut flags: Vec<bool> = (0..answerable + impossible).map(|i| i >= answerable).collect();
    flags.shuffle(&mut rng);
    let rows = flags
        .into_iter()
        .enumerate()
        .map(|(i, impossible)| {
            let subject = phrase(&mut rng);
            let context = format!(
                "Passage {i}: {} was recorded in the year {}. Later, {}.",
                capitalize(&subject),
                1700 + rng.random_range(0..300),
                phrase(&mut rng)
            );
            let question = format!("In passage {i}, when was {subject} recorded?");
            vec![
                Value::Int(i as i64),
                Value::text(format!("Topic {}", i % 17)),
                Value::text(context),
                Value::text(question),
                Value::Bool(impossible),
            ]
        })
        .collect();
    Table::new("squad", squad_schema(), rows).expect("fixture schema")
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}
