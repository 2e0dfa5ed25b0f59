//! Parse rendered infix text into an explicit tree and evaluate it with
//! exact rationals. Shares no code with the engine's evaluator.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(i64),
    Bin(Box<Node>, char, Box<Node>),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(n) => write!(f, "{n}"),
            Node::Bin(l, op, r) => write!(f, "({l} {op} {r})"),
        }
    }
}

/// Reduced fraction with positive denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: i128,
    pub den: i128,
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Ratio {
    fn new(num: i128, den: i128) -> Ratio {
        let g = gcd(num, den).max(1);
        let s = if den < 0 { -1 } else { 1 };
        Ratio { num: s * num / g, den: s * den / g }
    }

    pub fn integer(&self) -> Option<i64> {
        (self.den == 1).then_some(self.num as i64)
    }
}

/// Tokens separated by single spaces: number (op number)*.
pub fn parse(text: &str) -> Result<Node, String> {
    let tokens: Vec<&str> = text.split(' ').collect();
    if tokens.len().is_multiple_of(2) {
        return Err(format!("even token count in {text:?}"));
    }
    let num = |t: &str| t.parse::<i64>().map(Node::Num).map_err(|_| format!("bad number {t:?}"));
    // precedence climbing over two levels
    let mut terms: Vec<(char, Node)> = Vec::new();
    let mut current = num(tokens[0])?;
    let mut pending = '+';
    let mut i = 1;
    while i < tokens.len() {
        let op = single_char(tokens[i])?;
        let rhs = num(tokens[i + 1])?;
        match op {
            '*' | '/' => current = Node::Bin(Box::new(current), op, Box::new(rhs)),
            '+' | '-' => {
                terms.push((pending, current));
                pending = op;
                current = rhs;
            }
            other => return Err(format!("unknown operator {other:?}")),
        }
        i += 2;
    }
    terms.push((pending, current));
    let mut iter = terms.into_iter();
    let (_, mut tree) = iter.next().unwrap();
    for (op, term) in iter {
        tree = Node::Bin(Box::new(tree), op, Box::new(term));
    }
    Ok(tree)
}

fn single_char(t: &str) -> Result<char, String> {
    let mut c = t.chars();
    match (c.next(), c.next()) {
        (Some(ch), None) => Ok(ch),
        _ => Err(format!("bad operator token {t:?}")),
    }
}

/// Value of every node, children before parents; `None` on division by zero.
pub fn eval_all(node: &Node, out: &mut Vec<Ratio>) -> Option<Ratio> {
    let v = match node {
        Node::Num(n) => Ratio::new(*n as i128, 1),
        Node::Bin(l, op, r) => {
            let a = eval_all(l, out)?;
            let b = eval_all(r, out)?;
            match op {
                '+' => Ratio::new(a.num * b.den + b.num * a.den, a.den * b.den),
                '-' => Ratio::new(a.num * b.den - b.num * a.den, a.den * b.den),
                '*' => Ratio::new(a.num * b.num, a.den * b.den),
                '/' => {
                    if b.num == 0 {
                        return None;
                    }
                    Ratio::new(a.num * b.den, a.den * b.num)
                }
                _ => unreachable!(),
            }
        }
    };
    out.push(v);
    Some(v)
}

/// Outcome of evaluating rendered text with the tree oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Integer value when every division node is exact.
    pub value: Option<i64>,
    pub divisions_exact: bool,
    /// Largest absolute value over all nodes.
    pub max_abs: i128,
}

pub fn oracle(text: &str) -> Result<OracleResult, String> {
    let tree = parse(text)?;
    let mut values = Vec::new();
    let Some(root) = eval_all(&tree, &mut values) else {
        return Ok(OracleResult { value: None, divisions_exact: false, max_abs: 0 });
    };
    let divisions_exact = divisions_exact(&tree);
    let max_abs = values.iter().map(|r| (r.num.abs() + r.den - 1) / r.den).max().unwrap_or(0);
    Ok(OracleResult {
        value: if divisions_exact { root.integer() } else { None },
        divisions_exact,
        max_abs,
    })
}

fn divisions_exact(node: &Node) -> bool {
    match node {
        Node::Num(_) => true,
        Node::Bin(l, op, r) => {
            let here = if *op == '/' {
                let mut scratch = Vec::new();
                match (eval_all(l, &mut scratch), eval_all(r, &mut scratch)) {
                    (Some(a), Some(b)) if b.num != 0 => {
                        let q = Ratio::new(a.num * b.den, a.den * b.num);
                        q.den == 1 && a.den == 1
                    }
                    _ => false,
                }
            } else {
                true
            };
            here && divisions_exact(l) && divisions_exact(r)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_shapes() {
        assert_eq!(oracle("8 - 4 * 2").unwrap().value, Some(0));
        assert_eq!(oracle("7 * 4 + 6 - 21").unwrap().value, Some(13));
        assert_eq!(oracle("72 / 3 + 9 - 5").unwrap().value, Some(28));
        assert_eq!(oracle("9 + 7").unwrap().value, Some(16));
        assert_eq!(parse("1 - 2 - 3").unwrap().to_string(), "((1 - 2) - 3)");
        assert_eq!(parse("2 * 3 / 2 + 1").unwrap().to_string(), "(((2 * 3) / 2) + 1)");
    }

    #[test]
    fn inexact_and_zero_division() {
        assert!(!oracle("7 / 2").unwrap().divisions_exact);
        assert_eq!(oracle("7 / 0").unwrap().value, None);
        assert!(oracle("7 ^ 2").is_err());
    }
}
