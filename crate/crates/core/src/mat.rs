//! Mental arithmetic task engine.
//!
//! Four fixed difficulty levels, a seeded question generator that only emits
//! questions with exact integer division and small non-negative answers, a
//! precedence-aware evaluator, answer checking and the five-row scoreboard.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Strategy;

/// Number of questions in every level.
pub const QUESTIONS_PER_LEVEL: u32 = 30;

/// Bound on every tier intermediate and on the final answer.
pub const VALUE_BOUND: i64 = 999;

/// Strict generation attempts before the non-negativity rule is relaxed.
pub const MAX_STRICT_ATTEMPTS: u32 = 1_000;

/// Rows shown on the scoreboard.
pub const SCOREBOARD_ROWS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatError {
    #[error("invalid level {0}: levels are numbered 1 to 4")]
    InvalidLevel(i64),
    #[error("expression needs {expected} operators for {operands} operands, got {actual}")]
    Arity {
        operands: usize,
        expected: usize,
        actual: usize,
    },
    #[error("division by zero")]
    DivisionByZero,
    #[error("inexact division {dividend} / {divisor}")]
    InexactDivision { dividend: i64, divisor: i64 },
    #[error("arithmetic overflow")]
    Overflow,
    #[error("answer submitted after {elapsed_ms} ms, limit is {limit_ms} ms")]
    LateSubmission { elapsed_ms: u64, limit_ms: u64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not an integer answer: {0:?}")]
    InvalidAnswer(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Add,
    Sub,
    Mul,
    Div,
}

impl Operator {
    pub fn symbol(self) -> char {
        match self {
            Operator::Add => '+',
            Operator::Sub => '-',
            Operator::Mul => '*',
            Operator::Div => '/',
        }
    }

    /// Mul and Div bind tighter than Add and Sub.
    pub fn is_multiplicative(self) -> bool {
        matches!(self, Operator::Mul | Operator::Div)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

impl FromStr for Operator {
    type Err = MatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "+" => Ok(Operator::Add),
            "-" => Ok(Operator::Sub),
            "*" => Ok(Operator::Mul),
            "/" => Ok(Operator::Div),
            other => Err(MatError::InvalidArgument(format!("unknown operator {other:?}"))),
        }
    }
}

/// Generation and timing parameters of one level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelConfig {
    pub level_id: u8,
    pub operand_count: usize,
    pub allowed_operators: Vec<Operator>,
    pub question_count: u32,
    pub seconds_per_question: u32,
    pub total_seconds: u32,
}

impl LevelConfig {
    pub fn time_limit_ms(&self) -> u64 {
        u64::from(self.seconds_per_question) * 1000
    }

    pub fn total_ms(&self) -> u64 {
        u64::from(self.total_seconds) * 1000
    }

    fn operand_ranges(&self) -> OperandRanges {
        match self.level_id {
            1 => OperandRanges { general: 20, mul_cap: 20 },
            2 => OperandRanges { general: 12, mul_cap: 12 },
            _ => OperandRanges { general: 25, mul_cap: 12 },
        }
    }
}

struct OperandRanges {
    general: i64,
    mul_cap: i64,
}

const DIVISOR_RANGE: (i64, i64) = (2, 9);
const QUOTIENT_RANGE: (i64, i64) = (2, 25);

/// Fixed configuration for levels 1 to 4.
pub fn level_config(level_id: i64) -> Result<LevelConfig, MatError> {
    use Operator::*;
    let (operand_count, allowed_operators, seconds_per_question) = match level_id {
        1 => (2, vec![Add, Sub], 4),
        2 => (3, vec![Add, Sub, Mul], 4),
        3 => (4, vec![Add, Sub, Mul], 5),
        4 => (4, vec![Add, Sub, Mul, Div], 5),
        other => return Err(MatError::InvalidLevel(other)),
    };
    Ok(LevelConfig {
        level_id: level_id as u8,
        operand_count,
        allowed_operators,
        question_count: QUESTIONS_PER_LEVEL,
        seconds_per_question,
        total_seconds: QUESTIONS_PER_LEVEL * seconds_per_question,
    })
}

/// One arithmetic item as shown to the participant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub level_id: u8,
    pub operands: Vec<i64>,
    pub operators: Vec<Operator>,
    pub rendered_text: String,
    pub correct_answer: i64,
    pub time_limit_s: u32,
}

impl Question {
    pub fn time_limit_ms(&self) -> u64 {
        u64::from(self.time_limit_s) * 1000
    }
}

/// Infix rendering with single spaces: `72 / 3 + 9 - 5`.
pub fn render_expression(operands: &[i64], operators: &[Operator]) -> String {
    let mut out = String::new();
    for (i, value) in operands.iter().enumerate() {
        if i > 0 {
            out.push(' ');
            out.push(operators[i - 1].symbol());
            out.push(' ');
        }
        out.push_str(&value.to_string());
    }
    out
}

/// Evaluate with Mul/Div before Add/Sub, left to right within a tier.
pub fn evaluate_expression(operands: &[i64], operators: &[Operator]) -> Result<i64, MatError> {
    evaluate_traced(operands, operators, |_| {})
}

/// Like [`evaluate_expression`] but reports every running tier value
/// (each partial product/quotient and each partial sum) to `observe`.
fn evaluate_traced(
    operands: &[i64],
    operators: &[Operator],
    mut observe: impl FnMut(i64),
) -> Result<i64, MatError> {
    let expected = operands.len().saturating_sub(1);
    if operands.is_empty() || operators.len() != expected {
        return Err(MatError::Arity {
            operands: operands.len(),
            expected,
            actual: operators.len(),
        });
    }

    let mut sum = 0i64;
    let mut pending = Operator::Add;
    let mut term = operands[0];
    observe(term);
    for (&op, &value) in operators.iter().zip(&operands[1..]) {
        match op {
            Operator::Mul => {
                term = term.checked_mul(value).ok_or(MatError::Overflow)?;
                observe(term);
            }
            Operator::Div => {
                if value == 0 {
                    return Err(MatError::DivisionByZero);
                }
                if term % value != 0 {
                    return Err(MatError::InexactDivision {
                        dividend: term,
                        divisor: value,
                    });
                }
                term /= value;
                observe(term);
            }
            Operator::Add | Operator::Sub => {
                sum = accumulate(sum, pending, term)?;
                observe(sum);
                pending = op;
                term = value;
                observe(term);
            }
        }
    }
    let total = accumulate(sum, pending, term)?;
    observe(total);
    Ok(total)
}

fn accumulate(sum: i64, op: Operator, term: i64) -> Result<i64, MatError> {
    match op {
        Operator::Sub => sum.checked_sub(term),
        _ => sum.checked_add(term),
    }
    .ok_or(MatError::Overflow)
}

/// Generate one question for `config`, advancing `rng`.
///
/// Identical generator state always yields the identical question.
pub fn generate_question(config: &LevelConfig, rng: &mut ChaCha8Rng) -> Question {
    let question_id = format!("q{:016x}", rng.random::<u64>());

    let mut drawn = None;
    for _ in 0..MAX_STRICT_ATTEMPTS {
        if let Some(candidate) = draw_candidate(config, rng, true) {
            drawn = Some(candidate);
            break;
        }
    }
    if drawn.is_none() {
        tracing::warn!(
            level = config.level_id,
            "no non-negative question after {MAX_STRICT_ATTEMPTS} attempts, relaxing"
        );
        for _ in 0..MAX_STRICT_ATTEMPTS {
            if let Some(candidate) = draw_candidate(config, rng, false) {
                drawn = Some(candidate);
                break;
            }
        }
    }
    // Sums of in-range operands are always valid, so this ends generation.
    let (operands, operators, correct_answer) = drawn.unwrap_or_else(|| {
        let ranges = config.operand_ranges();
        let operands: Vec<i64> = (0..config.operand_count)
            .map(|_| rng.random_range(1..=ranges.general))
            .collect();
        let operators = vec![Operator::Add; config.operand_count - 1];
        let total = operands.iter().sum();
        (operands, operators, total)
    });

    Question {
        question_id,
        level_id: config.level_id,
        rendered_text: render_expression(&operands, &operators),
        operands,
        operators,
        correct_answer,
        time_limit_s: config.seconds_per_question,
    }
}

fn draw_candidate(
    config: &LevelConfig,
    rng: &mut ChaCha8Rng,
    require_non_negative: bool,
) -> Option<(Vec<i64>, Vec<Operator>, i64)> {
    let allowed = &config.allowed_operators;
    let operators: Vec<Operator> = (0..config.operand_count - 1)
        .map(|_| allowed[rng.random_range(0..allowed.len() as u32) as usize])
        .collect();

    let ranges = config.operand_ranges();
    let mut operands = Vec::with_capacity(config.operand_count);
    // Divisor already fixed by a dividend built as divisor * quotient.
    let mut reserved_divisor = None;
    let mut chain = 0i64;
    for i in 0..config.operand_count {
        let before = i.checked_sub(1).map(|j| operators[j]);
        let after = operators.get(i).copied();
        let value = match before {
            Some(Operator::Div) => match reserved_divisor.take() {
                Some(divisor) => divisor,
                None => {
                    let divisors: Vec<i64> = (DIVISOR_RANGE.0..=DIVISOR_RANGE.1)
                        .filter(|d| chain % d == 0)
                        .collect();
                    if divisors.is_empty() {
                        return None;
                    }
                    divisors[rng.random_range(0..divisors.len() as u32) as usize]
                }
            },
            _ if after == Some(Operator::Div) && before != Some(Operator::Mul) => {
                let divisor = rng.random_range(DIVISOR_RANGE.0..=DIVISOR_RANGE.1);
                let quotient = rng.random_range(QUOTIENT_RANGE.0..=QUOTIENT_RANGE.1);
                reserved_divisor = Some(divisor);
                divisor * quotient
            }
            _ if before == Some(Operator::Mul) || after == Some(Operator::Mul) => {
                rng.random_range(1..=ranges.mul_cap)
            }
            _ => rng.random_range(1..=ranges.general),
        };
        chain = match before {
            Some(Operator::Mul) => chain * value,
            Some(Operator::Div) => chain / value,
            _ => value,
        };
        operands.push(value);
    }

    let mut in_bounds = true;
    let answer = evaluate_traced(&operands, &operators, |v| {
        in_bounds &= v.abs() <= VALUE_BOUND;
    })
    .ok()?;
    if !in_bounds || (require_non_negative && answer < 0) {
        return None;
    }
    Some((operands, operators, answer))
}

/// Generator positioned at `stream` of `seed`; independent per stream.
pub fn question_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `count` questions, question `i` drawn from its own stream of `seed`.
pub fn generate_batch(
    config: &LevelConfig,
    seed: u64,
    count: usize,
    strategy: Strategy,
) -> Vec<Question> {
    strategy.map_range(count, |i| {
        let mut rng = question_rng(seed, i as u64);
        generate_question(config, &mut rng)
    })
}

/// Outcome of one presented question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub question_id: String,
    pub submitted_value: Option<i64>,
    pub elapsed_ms: u64,
    pub correct: bool,
}

impl Attempt {
    pub fn is_timeout(&self) -> bool {
        self.submitted_value.is_none()
    }
}

/// Grade a submission. An absent value is a timeout and never correct.
pub fn check_answer(
    question: &Question,
    submitted_value: Option<i64>,
    elapsed_ms: u64,
) -> Result<Attempt, MatError> {
    let limit_ms = question.time_limit_ms();
    if submitted_value.is_some() && elapsed_ms > limit_ms {
        return Err(MatError::LateSubmission {
            elapsed_ms,
            limit_ms,
        });
    }
    Ok(Attempt {
        question_id: question.question_id.clone(),
        submitted_value,
        elapsed_ms: elapsed_ms.min(limit_ms),
        correct: submitted_value == Some(question.correct_answer),
    })
}

/// Parse participant input as a signed decimal integer.
pub fn parse_answer(input: &str) -> Result<i64, MatError> {
    input
        .trim()
        .parse::<i64>()
        .map_err(|_| MatError::InvalidAnswer(input.to_string()))
}

/// Remaining time (ms) at which the hurry-up indicator turns on.
pub fn hurry_up_threshold_ms(time_limit_s: i64) -> Result<u64, MatError> {
    if time_limit_s <= 0 {
        return Err(MatError::InvalidArgument(format!(
            "time limit must be positive, got {time_limit_s}"
        )));
    }
    Ok(time_limit_s as u64 * 1000 / 2)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreboardEntry {
    pub display_name: String,
    pub score: u32,
}

/// A real participant's finished run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Standing {
    pub display_name: String,
    pub score: u32,
    /// Wall-clock completion time; earlier wins ties.
    pub completed_at_ms: i64,
}

pub fn default_dummies() -> Vec<ScoreboardEntry> {
    [("Aarav", 27), ("Meera", 24), ("Kabir", 21), ("Isha", 18), ("Rohan", 15)]
        .into_iter()
        .map(|(name, score)| ScoreboardEntry {
            display_name: name.to_string(),
            score,
        })
        .collect()
}

/// Top five of real standings merged with the dummy rows.
///
/// Ordering: score descending, then earlier completion, with dummies placed
/// after real participants holding the same score.
pub fn scoreboard(standings: &[Standing], dummies: &[ScoreboardEntry]) -> Vec<ScoreboardEntry> {
    let mut rows: Vec<(u32, Option<i64>, usize, &str)> = standings
        .iter()
        .enumerate()
        .map(|(i, s)| (s.score, Some(s.completed_at_ms), i, s.display_name.as_str()))
        .chain(
            dummies
                .iter()
                .enumerate()
                .map(|(i, d)| (d.score, None, i, d.display_name.as_str())),
        )
        .collect();
    rows.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then_with(|| match (a.1, b.1) {
                (Some(x), Some(y)) => x.cmp(&y),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            })
            .then_with(|| a.2.cmp(&b.2))
    });
    let mut board: Vec<ScoreboardEntry> = rows
        .into_iter()
        .take(SCOREBOARD_ROWS)
        .map(|(score, _, _, name)| ScoreboardEntry {
            display_name: name.to_string(),
            score,
        })
        .collect();
    while board.len() < SCOREBOARD_ROWS {
        board.push(ScoreboardEntry {
            display_name: "-".to_string(),
            score: 0,
        });
    }
    board
}

#[cfg(test)]
mod tests {
    use super::*;
    use Operator::*;

    #[test]
    fn level_table() {
        let l1 = level_config(1).unwrap();
        assert_eq!(l1.operand_count, 2);
        assert_eq!(l1.allowed_operators, vec![Add, Sub]);
        assert_eq!((l1.question_count, l1.seconds_per_question, l1.total_seconds), (30, 4, 120));
        let l3 = level_config(3).unwrap();
        assert_eq!(l3.operand_count, 4);
        assert_eq!(l3.allowed_operators, vec![Add, Sub, Mul]);
        assert_eq!((l3.question_count, l3.seconds_per_question, l3.total_seconds), (30, 5, 150));
        assert_eq!(level_config(5), Err(MatError::InvalidLevel(5)));
        assert_eq!(level_config(0), Err(MatError::InvalidLevel(0)));
    }

    #[test]
    fn worked_expressions() {
        assert_eq!(evaluate_expression(&[8, 4, 2], &[Sub, Mul]), Ok(0));
        assert_eq!(evaluate_expression(&[7, 4, 6, 21], &[Mul, Add, Sub]), Ok(13));
        assert_eq!(evaluate_expression(&[72, 3, 9, 5], &[Div, Add, Sub]), Ok(28));
        assert_eq!(evaluate_expression(&[9, 7], &[Add]), Ok(16));
    }

    #[test]
    fn evaluation_errors() {
        assert_eq!(evaluate_expression(&[1, 0], &[Div]), Err(MatError::DivisionByZero));
        assert_eq!(
            evaluate_expression(&[7, 2], &[Div]),
            Err(MatError::InexactDivision { dividend: 7, divisor: 2 })
        );
        assert!(matches!(evaluate_expression(&[1, 2], &[]), Err(MatError::Arity { .. })));
        assert_eq!(
            evaluate_expression(&[i64::MAX, 2], &[Mul]),
            Err(MatError::Overflow)
        );
    }

    #[test]
    fn rendering() {
        assert_eq!(render_expression(&[72, 3, 9, 5], &[Div, Add, Sub]), "72 / 3 + 9 - 5");
        assert_eq!(render_expression(&[9, 7], &[Add]), "9 + 7");
    }

    #[test]
    fn generation_is_reproducible() {
        let cfg = level_config(4).unwrap();
        let a = generate_question(&cfg, &mut question_rng(11, 0));
        let b = generate_question(&cfg, &mut question_rng(11, 0));
        assert_eq!(a, b);
        let mut rng = question_rng(11, 0);
        let first = generate_question(&cfg, &mut rng);
        let second = generate_question(&cfg, &mut rng);
        assert_ne!(first.question_id, second.question_id);
    }

    #[test]
    fn level_two_golden_question() {
        let cfg = level_config(2).unwrap();
        let q = generate_question(&cfg, &mut question_rng(2024, 0));
        assert_eq!(q.rendered_text, GOLDEN_L2_TEXT);
        assert_eq!(q.correct_answer, GOLDEN_L2_ANSWER);
        assert_eq!(q.question_id, GOLDEN_L2_ID);
    }

    // Snapshot pinning the seeded stream; a change here breaks replay of stored logs.
    const GOLDEN_L2_TEXT: &str = "9 * 11 * 9";
    const GOLDEN_L2_ANSWER: i64 = 9 * 11 * 9;
    const GOLDEN_L2_ID: &str = "q2ac1c46fc0764bc7";

    #[test]
    fn level_one_shape() {
        let cfg = level_config(1).unwrap();
        for seed in 0..200 {
            let q = generate_question(&cfg, &mut question_rng(seed, 0));
            assert_eq!(q.operands.len(), 2);
            assert!(matches!(q.operators[0], Add | Sub));
            assert!(q.correct_answer >= 0);
            assert_eq!(q.time_limit_s, 4);
        }
    }

    #[test]
    fn level_four_divisions_are_exact() {
        let cfg = level_config(4).unwrap();
        let mut saw_div = false;
        for seed in 0..500 {
            let q = generate_question(&cfg, &mut question_rng(seed, 3));
            saw_div |= q.operators.contains(&Div);
            assert_eq!(evaluate_expression(&q.operands, &q.operators), Ok(q.correct_answer));
        }
        assert!(saw_div);
    }

    fn q(text_operands: &[i64], ops: &[Operator], limit: u32) -> Question {
        Question {
            question_id: "q".into(),
            level_id: 1,
            operands: text_operands.to_vec(),
            operators: ops.to_vec(),
            rendered_text: render_expression(text_operands, ops),
            correct_answer: evaluate_expression(text_operands, ops).unwrap(),
            time_limit_s: limit,
        }
    }

    #[test]
    fn answer_checking() {
        let easy = q(&[9, 7], &[Add], 4);
        assert!(check_answer(&easy, Some(16), 2100).unwrap().correct);
        let timeout = check_answer(&easy, None, 4000).unwrap();
        assert!(!timeout.correct && timeout.is_timeout());
        let hard = q(&[72, 3, 9, 5], &[Div, Add, Sub], 5);
        assert!(!check_answer(&hard, Some(24), 3000).unwrap().correct);
        assert_eq!(
            check_answer(&easy, Some(16), 4001),
            Err(MatError::LateSubmission { elapsed_ms: 4001, limit_ms: 4000 })
        );
        assert_eq!(check_answer(&easy, None, 9000).unwrap().elapsed_ms, 4000);
    }

    #[test]
    fn answer_parsing() {
        assert_eq!(parse_answer(" 16\n"), Ok(16));
        assert_eq!(parse_answer("-3"), Ok(-3));
        assert_eq!(parse_answer("+4"), Ok(4));
        assert!(parse_answer("1.5").is_err());
        assert!(parse_answer("").is_err());
    }

    #[test]
    fn hurry_up() {
        assert_eq!(hurry_up_threshold_ms(5), Ok(2500));
        assert_eq!(hurry_up_threshold_ms(4), Ok(2000));
        assert!(hurry_up_threshold_ms(0).is_err());
        assert!(hurry_up_threshold_ms(-1).is_err());
    }

    #[test]
    fn scoreboard_fills_with_dummies() {
        let dummies = default_dummies();
        assert_eq!(scoreboard(&[], &dummies), dummies);

        let top = Standing { display_name: "P01".into(), score: 30, completed_at_ms: 5 };
        let board = scoreboard(&[top], &dummies);
        assert_eq!(board[0].display_name, "P01");
        assert_eq!(&board[1..], &dummies[..4]);
    }

    #[test]
    fn scoreboard_ties_prefer_earlier_completion() {
        let dummies = default_dummies();
        let late = Standing { display_name: "late".into(), score: 29, completed_at_ms: 900 };
        let early = Standing { display_name: "early".into(), score: 29, completed_at_ms: 100 };
        let board = scoreboard(&[late, early], &dummies);
        assert_eq!(board[0].display_name, "early");
        assert_eq!(board[1].display_name, "late");
        assert_eq!(board.len(), 5);
        // a real participant ties with a dummy: the participant ranks first
        let tied = Standing { display_name: "tie".into(), score: 27, completed_at_ms: 1 };
        assert_eq!(scoreboard(&[tied], &dummies)[0].display_name, "tie");
    }

    #[test]
    fn scoreboard_pads_short_dummy_list() {
        let board = scoreboard(&[], &default_dummies()[..2]);
        assert_eq!(board.len(), 5);
        assert!(board.windows(2).all(|w| w[0].score >= w[1].score));
    }
}
