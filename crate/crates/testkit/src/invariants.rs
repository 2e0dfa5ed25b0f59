//! Structural checks every generated question must pass.

use stresslab_core::mat::{level_config, render_expression, Operator, Question, VALUE_BOUND};

use crate::expr::oracle;

/// Operator set, operand ranges, exact division, bounds and the answer,
/// the last recomputed by the tree oracle.
pub fn check_question(q: &Question) -> Result<(), String> {
    let cfg = level_config(i64::from(q.level_id)).map_err(|e| e.to_string())?;
    if q.operands.len() != cfg.operand_count || q.operators.len() + 1 != q.operands.len() {
        return Err("operand count".into());
    }
    if let Some(op) = q.operators.iter().find(|o| !cfg.allowed_operators.contains(o)) {
        return Err(format!("operator {op:?} not allowed"));
    }
    if q.time_limit_s != cfg.seconds_per_question {
        return Err("time limit".into());
    }
    let general = match q.level_id {
        1 => 20,
        2 => 12,
        _ => 25,
    };
    for (i, &v) in q.operands.iter().enumerate() {
        let before = i.checked_sub(1).map(|j| q.operators[j]);
        let after = q.operators.get(i).copied();
        let ok = if before == Some(Operator::Div) {
            (2..=9).contains(&v)
        } else if after == Some(Operator::Div) && before != Some(Operator::Mul) {
            (4..=225).contains(&v)
        } else if before == Some(Operator::Mul) || after == Some(Operator::Mul) {
            (1..=general.min(12)).contains(&v)
        } else {
            (1..=general).contains(&v)
        };
        if !ok {
            return Err(format!("operand {v} at {i} out of range"));
        }
    }
    let o = oracle(&q.rendered_text)?;
    if !o.divisions_exact {
        return Err("inexact division".into());
    }
    if o.max_abs > VALUE_BOUND as i128 {
        return Err(format!("intermediate {} out of bounds", o.max_abs));
    }
    if o.value != Some(q.correct_answer) {
        return Err(format!("oracle {:?} vs stored {}", o.value, q.correct_answer));
    }
    if q.correct_answer < 0 {
        return Err("negative answer".into());
    }
    if q.rendered_text != render_expression(&q.operands, &q.operators) {
        return Err("rendering".into());
    }
    Ok(())
}
