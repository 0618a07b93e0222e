//! Small arithmetic word problems with numeric answer checking.
//!
//! The interesting part is [`eval_math_answer`]: final answers arrive as
//! free text (`"$1,200.50"`, `"3/4"`, `"10 apples"`), so correctness is
//! numeric equivalence under exact rational arithmetic with a 1e-6
//! tolerance, falling back to case-insensitive string equality when either
//! side is not a number.

use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use super::{read_data_file, AnswerChecker, Dataset, QueryRecord, TaskType};
use crate::error::{Error, Result};

/// Parse a numeric answer. Accepts integers, decimals and `a/b` fractions,
/// with an optional sign; tolerates surrounding quotes, a leading `$`, a
/// trailing `%`, thousands commas and trailing punctuation. If the whole
/// text does not parse, the first whitespace-separated token is tried, so
/// `"10 apples"` parses as 10.
pub fn parse_numeric(text: &str) -> Option<BigRational> {
    let cleaned = clean(text);
    parse_cleaned(&cleaned).or_else(|| {
        let first = clean(text.split_whitespace().next()?);
        if first == cleaned {
            None
        } else {
            parse_cleaned(&first)
        }
    })
}

fn clean(text: &str) -> String {
    let t = text.trim();
    let t = t.trim_matches(|c: char| c == '"' || c == '\'' || c == '`');
    let t = t.trim_end_matches(['.', '!', '?', ',', ';', ':']);
    let t = t.trim_start_matches('$').trim_end_matches('%').trim();
    t.replace(',', "")
}

fn parse_cleaned(text: &str) -> Option<BigRational> {
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let magnitude = if let Some((numer, denom)) = digits.split_once('/') {
        let numer = parse_digits(numer)?;
        let denom = parse_digits(denom)?;
        if denom.is_zero() {
            return None;
        }
        BigRational::new(numer, denom)
    } else if let Some((int_part, frac_part)) = digits.split_once('.') {
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        let int_part = parse_digits(if int_part.is_empty() { "0" } else { int_part })?;
        let frac_digits = if frac_part.is_empty() { "0" } else { frac_part };
        let frac = parse_digits(frac_digits)?;
        let scale = num_traits::pow(BigInt::from(10), frac_digits.len());
        BigRational::from(int_part) + BigRational::new(frac, scale)
    } else {
        BigRational::from(parse_digits(digits)?)
    };
    Some(if negative { -magnitude } else { magnitude })
}

fn parse_digits(text: &str) -> Option<BigInt> {
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    text.parse().ok()
}

fn tolerance() -> BigRational {
    BigRational::new(BigInt::from(1), BigInt::from(1_000_000))
}

/// Compare two final answers: numerically within 1e-6 when both parse as
/// numbers, otherwise by trimmed case-insensitive string equality.
pub fn eval_math_answer(answer: &str, gold: &str) -> bool {
    match (parse_numeric(answer), parse_numeric(gold)) {
        (Some(a), Some(g)) => (a - g).abs() <= tolerance(),
        _ => answer.trim().eq_ignore_ascii_case(gold.trim()),
    }
}

fn builtin_problems() -> Vec<QueryRecord> {
    [
        (
            "Tom has 3 boxes with 4 apples each. He eats 2 apples. How many apples remain?",
            "10",
        ),
        (
            "A train travels 60 miles per hour for 2.5 hours. How far does it travel, in miles?",
            "150",
        ),
        (
            "Lisa splits 3 pizzas equally among 4 friends. What fraction of a pizza does each friend get?",
            "3/4",
        ),
        ("What is 15% of 200?", "30"),
        (
            "A shirt costs $25 and is discounted by $7. What is the final price, in dollars?",
            "18",
        ),
        (
            "Sam reads 12 pages a day for 6 days, then 8 more pages. How many pages has Sam read?",
            "80",
        ),
        (
            "A rectangle is 7 units long and 5 units wide. What is its area, in square units?",
            "35",
        ),
        (
            "Nina had 100 marbles, gave away 45, and then bought 20 more. How many marbles does she have now?",
            "75",
        ),
    ]
    .into_iter()
    .map(|(query, gold)| QueryRecord::new(query).with_gold(gold))
    .collect()
}

/// Load the arithmetic dataset. The data file is a JSON array whose entries
/// are either bare query strings or `{"query", "gold"}` objects; without a
/// file, eight built-in problems are used.
pub fn load(data_file: Option<&Path>) -> Result<Dataset> {
    let queries = match data_file {
        Some(path) => {
            let value = read_data_file(path)?;
            let entries = value.as_array().ok_or_else(|| {
                Error::Config(format!("{}: expected a JSON array", path.display()))
            })?;
            let mut queries = Vec::new();
            for (i, entry) in entries.iter().enumerate() {
                match entry {
                    serde_json::Value::String(s) => queries.push(QueryRecord::new(s.clone())),
                    serde_json::Value::Object(map) => {
                        let query = map.get("query").and_then(|v| v.as_str()).ok_or_else(|| {
                            Error::Config(format!(
                                "{} entry {i}: missing string field 'query'",
                                path.display()
                            ))
                        })?;
                        let mut record = QueryRecord::new(query);
                        if let Some(gold) = map.get("gold").and_then(|v| v.as_str()) {
                            record = record.with_gold(gold);
                        }
                        queries.push(record);
                    }
                    _ => {
                        return Err(Error::Config(format!(
                            "{} entry {i}: expected a string or object",
                            path.display()
                        )));
                    }
                }
            }
            queries
        }
        None => builtin_problems(),
    };
    Ok(Dataset {
        name: "toy-math".to_string(),
        task_type: TaskType::LanguageGrounded,
        queries,
        environment: None,
        resources: None,
        checker: AnswerChecker::MathEquivalent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rational(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn parses_integers_decimals_and_fractions() {
        assert_eq!(parse_numeric("42"), Some(rational(42, 1)));
        assert_eq!(parse_numeric(" -3 "), Some(rational(-3, 1)));
        assert_eq!(parse_numeric("+7"), Some(rational(7, 1)));
        assert_eq!(parse_numeric("3.14"), Some(rational(314, 100)));
        assert_eq!(parse_numeric(".5"), Some(rational(1, 2)));
        assert_eq!(parse_numeric("-0.25"), Some(rational(-1, 4)));
        assert_eq!(parse_numeric("3/4"), Some(rational(3, 4)));
        assert_eq!(parse_numeric("-1/2"), Some(rational(-1, 2)));
    }

    #[test]
    fn cleans_units_quotes_and_punctuation() {
        assert_eq!(parse_numeric("$1,200.50"), Some(rational(120050, 100)));
        assert_eq!(parse_numeric("30%"), Some(rational(30, 1)));
        assert_eq!(parse_numeric("42."), Some(rational(42, 1)));
        assert_eq!(parse_numeric("\"18\""), Some(rational(18, 1)));
        assert_eq!(parse_numeric("10 apples"), Some(rational(10, 1)));
        assert_eq!(parse_numeric("1,234"), Some(rational(1234, 1)));
    }

    #[test]
    fn rejects_non_numbers() {
        assert_eq!(parse_numeric(""), None);
        assert_eq!(parse_numeric("."), None);
        assert_eq!(parse_numeric("abc"), None);
        assert_eq!(parse_numeric("1/0"), None);
        assert_eq!(parse_numeric("--5"), None);
        assert_eq!(parse_numeric("1.2.3"), None);
        assert_eq!(parse_numeric("forty"), None);
    }

    #[test]
    fn equivalence_is_exact_rational_within_tolerance() {
        assert!(eval_math_answer("0.5", "1/2"));
        assert!(eval_math_answer("150", "150.0000001"));
        assert!(!eval_math_answer("150", "150.000002"));
        assert!(eval_math_answer("0.33333333", "1/3"));
        assert!(!eval_math_answer("0.333", "1/3"));
        assert!(eval_math_answer("$18.00", "18"));
        assert!(eval_math_answer("10 apples", "10"));
        assert!(!eval_math_answer("11", "10"));
    }

    #[test]
    fn non_numeric_answers_fall_back_to_string_equality() {
        assert!(eval_math_answer(" Paris ", "paris"));
        assert!(!eval_math_answer("Paris", "London"));
        assert!(!eval_math_answer("42", "forty-two"));
    }

    #[test]
    fn builtin_dataset_checks_answers() {
        let dataset = load(None).unwrap();
        assert_eq!(dataset.queries.len(), 8);
        assert_eq!(dataset.task_type, TaskType::LanguageGrounded);
        assert!(dataset.is_correct(0, Some("10"), None));
        assert!(dataset.is_correct(0, Some("10.0000000"), None));
        assert!(dataset.is_correct(2, Some("0.75"), None)); // gold is 3/4
        assert!(!dataset.is_correct(0, Some("9"), None));
        assert!(!dataset.is_correct(0, None, None));
    }

    #[test]
    fn file_loading_supports_strings_and_objects() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("math.json");
        std::fs::write(
            &path,
            serde_json::json!([
                "What is 2 + 2?",
                {"query": "What is 6 * 7?", "gold": "42"}
            ])
            .to_string(),
        )
        .unwrap();
        let dataset = load(Some(&path)).unwrap();
        assert_eq!(dataset.queries.len(), 2);
        assert_eq!(dataset.queries[0].gold, None);
        assert_eq!(dataset.queries[1].gold.as_deref(), Some("42"));
        assert!(dataset.is_correct(1, Some("42.0"), None));
        // Ungraded query: never correct.
        assert!(!dataset.is_correct(0, Some("4"), None));
    }
}
