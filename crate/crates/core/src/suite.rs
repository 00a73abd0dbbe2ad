//! The five benchmark queries, written against the fixture schema.

pub const Q1: &str = "SELECT LLM(\"Recommend movies for the user based on {movie information} and {user review}\",
     m.movie_info, r.review_content)
FROM reviews r
JOIN movies m ON r.rotten_tomatoes_link ==
m.rotten_tomatoes_link";

pub const Q2: &str = "SELECT m.movie_title
FROM Movies m
JOIN Reviews r ON r.rotten_tomatoes_link =
m.rotten_tomatoes_link
WHERE LLM(\"Analyze whether this movie would be suitable for kids based on {movie information} and {user review}\", m.movie_info, r.review_content) == \"Yes\"
AND r.review_type == \"Fresh\"";

pub const Q3: &str = "SELECT LLM(\"Recommend movies for the user based on {movie information} and {user review}\", m.movie_info, r.review_content) AS recommendations
FROM Movies m
JOIN Reviews r ON r.rotten_tomatoes_link =
m.rotten_tomatoes_link
WHERE LLM(\"Analyze whether this movie would be suitable for kids based on {movie information} and {user review}\", m.movie_info, r.review_content) == \"Yes\"
AND r.review_type == \"Fresh\"";

pub const Q4: &str = "SELECT AVG(LLM(\"Rate a satisfaction score between 0 (bad) and 5 (good) based on {review} and {info}: \",r.review_content, m.movie_info)) as AverageScore
FROM reviews r
JOIN movies m ON r.rotten_tomatoes_link =
m.rotten_tomatoes_link
GROUP BY m.movie_title";

pub const Q5: &str = "SELECT LLM(\"Given the following {context}, answer this question\",
     SIMILARITY_SEARCH(s.question),
     s.question)
FROM squad s
WHERE s.is_impossible == False;";

/// `(name, sql)` for every suite query, in order.
pub const QUERIES: [(&str, &str); 5] = [("q1", Q1), ("q2", Q2), ("q3", Q3), ("q4", Q4), ("q5", Q5)];

pub fn by_name(name: &str) -> Option<&'static str> {
    QUERIES.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, q)| *q)
}
