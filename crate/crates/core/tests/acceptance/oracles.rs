//! Reference implementations and generators that share no code with the
//! library paths they check.

use chrono::{DateTime, Duration, Utc};
use rand::rngs::StdRng;
use rand::Rng;

use studymate::profile::{
    default_profile, BloomLevel, LearnerProfile, Mood, StrategyPreference, UnitTrait,
};

// ---------------------------------------------------------------------------
// Strategy rules, as explicit lookup tables over the test grid.

pub const EFFICACY_GRID: [f64; 5] = [0.0, 0.25, 0.3, 0.35, 1.0];
pub const MOTIVATION_GRID: [f64; 3] = [0.5, 0.8, 0.85];
pub const WEAK_GRID: [usize; 3] = [0, 3, 4];
pub const PREF_GRID: [StrategyPreference; 3] = [
    StrategyPreference::Unset,
    StrategyPreference::Guided,
    StrategyPreference::Exploratory,
];

/// Low self-efficacy fires below 0.3 only: 0 and 0.25 yes, 0.3 and up no.
const R1_BY_EFFICACY: [bool; 5] = [true, true, false, false, false];
/// High motivation fires above 0.8 only.
const R2_BY_MOTIVATION: [bool; 3] = [false, false, true];
/// More than three weak topics.
const R3_BY_WEAK: [bool; 3] = [false, false, true];
/// Indexed by Bloom level, remember..create.
const R4_BY_BLOOM: [bool; 6] = [true, false, false, false, false, false];
const R5_BY_BLOOM: [bool; 6] = [false, false, true, false, false, false];
/// Indexed like PREF_GRID.
const R6_BY_PREF: [bool; 3] = [false, true, false];
const R7_BY_PREF: [bool; 3] = [false, false, true];

/// Expected fired rule codes for one grid point, in rule order.
pub fn expected_rules(e: usize, m: usize, w: usize, b: usize, p: usize) -> Vec<&'static str> {
    let table = [
        ("R1", R1_BY_EFFICACY[e]),
        ("R2", R2_BY_MOTIVATION[m]),
        ("R3", R3_BY_WEAK[w]),
        ("R4", R4_BY_BLOOM[b]),
        ("R5", R5_BY_BLOOM[b]),
        ("R6", R6_BY_PREF[p]),
        ("R7", R7_BY_PREF[p]),
    ];
    table
        .into_iter()
        .filter(|(_, fires)| *fires)
        .map(|(code, _)| code)
        .collect()
}

// ---------------------------------------------------------------------------
// Shunting-yard evaluator for the calculator grammar.

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token {
    Num(f64),
    Op(char),
    Neg,
    Open,
    Close,
}

fn precedence(t: Token) -> u8 {
    match t {
        Token::Neg => 3,
        Token::Op('*') | Token::Op('/') => 2,
        Token::Op(_) => 1,
        _ => 0,
    }
}

fn lex(src: &str) -> Option<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == ' ' {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            out.push(Token::Num(text.parse().ok()?));
            continue;
        }
        // a minus is unary when nothing that ends an operand precedes it
        let prev_ends_operand = matches!(out.last(), Some(Token::Num(_)) | Some(Token::Close));
        let tok = match c {
            '+' => Token::Op('+'),
            '-' | '\u{2212}' if prev_ends_operand => Token::Op('-'),
            '-' | '\u{2212}' => Token::Neg,
            '*' | '\u{00D7}' => Token::Op('*'),
            '/' | '\u{00F7}' => Token::Op('/'),
            '(' => Token::Open,
            ')' => Token::Close,
            _ => return None,
        };
        out.push(tok);
        i += 1;
    }
    Some(out)
}

fn to_rpn(tokens: Vec<Token>) -> Option<Vec<Token>> {
    let mut output = Vec::new();
    let mut ops: Vec<Token> = Vec::new();
    for t in tokens {
        match t {
            Token::Num(_) => output.push(t),
            Token::Neg => ops.push(t),
            Token::Op(_) => {
                while let Some(&top) = ops.last() {
                    // left-associative binary ops pop equal precedence;
                    // prefix negation on the stack always binds tighter
                    if top != Token::Open && precedence(top) >= precedence(t) {
                        output.push(ops.pop()?);
                    } else {
                        break;
                    }
                }
                ops.push(t);
            }
            Token::Open => ops.push(t),
            Token::Close => loop {
                match ops.pop()? {
                    Token::Open => break,
                    op => output.push(op),
                }
            },
        }
    }
    while let Some(op) = ops.pop() {
        if op == Token::Open {
            return None;
        }
        output.push(op);
    }
    Some(output)
}

/// `None` for malformed input or division by zero.
pub fn shunting_yard(src: &str) -> Option<f64> {
    let rpn = to_rpn(lex(src)?)?;
    let mut stack: Vec<f64> = Vec::new();
    for t in rpn {
        match t {
            Token::Num(n) => stack.push(n),
            Token::Neg => {
                let a = stack.pop()?;
                stack.push(-a);
            }
            Token::Op(op) => {
                let b = stack.pop()?;
                let a = stack.pop()?;
                stack.push(match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    '/' => {
                        if b == 0.0 {
                            return None;
                        }
                        a / b
                    }
                    _ => return None,
                });
            }
            _ => return None,
        }
    }
    if stack.len() == 1 {
        stack.pop()
    } else {
        None
    }
}

fn random_number(rng: &mut StdRng) -> String {
    match rng.random_range(0..4) {
        0 => rng.random_range(0..10).to_string(),
        1 => rng.random_range(0..1000).to_string(),
        2 => format!("{}.{}", rng.random_range(0..100), rng.random_range(0..100)),
        _ => format!(".{}", rng.random_range(1..10)),
    }
}

/// Random expression with nesting depth at most `depth`.
pub fn random_expression(rng: &mut StdRng, depth: u32) -> String {
    if depth == 0 || rng.random_bool(0.3) {
        let n = random_number(rng);
        return if rng.random_bool(0.15) { format!("-{n}") } else { n };
    }
    match rng.random_range(0..6) {
        0 => format!("({})", random_expression(rng, depth - 1)),
        1 => format!("-({})", random_expression(rng, depth - 1)),
        _ => {
            let op = ["+", "-", "*", "/", " + ", " * ", "×", "÷", "−"][rng.random_range(0..9)];
            format!(
                "{}{op}{}",
                random_expression(rng, depth - 1),
                random_expression(rng, depth - 1)
            )
        }
    }
}

// ---------------------------------------------------------------------------
// Message and profile generators.

const FRAGMENTS: &[&str] = &[
    "I keep getting this wrong",
    "I can't do it",
    "I can’t do it",
    "this is too hard",
    "I give up",
    "I failed the quiz",
    "got it",
    "wow",
    "WHOA",
    "that makes sense",
    "interesting",
    "why",
    "what is a fraction",
    "how to solve",
    "what if",
    "compare these",
    "analyze the poem",
    "evaluate",
    "design an experiment",
    "create a story",
    "let me think",
    "I realized",
    "looking back",
    "step by step please",
    "guide me",
    "let me try",
    "on my own",
    "fraction",
    "denominator",
    "density",
    "decimals",
    "geometry",
    "poem",
    "essay",
    "my mind is blank",
    "I'm nervous",
    "I'm sure",
    "?",
    "...",
    "hmm",
    "the cat sat",
    "3 × 4 = 12",
    "1/3 + 1/4",
    "数学",
    "\u{201C}quoted\u{201D}",
    "",
];

/// A random message built from dictionary-relevant fragments and noise.
pub fn random_message(rng: &mut StdRng) -> String {
    let n = rng.random_range(1..=5);
    (0..n)
        .map(|_| FRAGMENTS[rng.random_range(0..FRAGMENTS.len())])
        .collect::<Vec<_>>()
        .join(if rng.random_bool(0.5) { " " } else { ", " })
}

fn random_trait(rng: &mut StdRng) -> UnitTrait {
    match rng.random_range(0..5) {
        0 => UnitTrait::ZERO,
        1 => UnitTrait::ONE,
        _ => UnitTrait::new(rng.random::<f64>()).unwrap(),
    }
}

fn random_text(rng: &mut StdRng) -> String {
    const PARTS: &[&str] = &["frac", "tion", "é", "数学", "/", "~", " ", "x", "\"q\"", "😀", "a.b"];
    let n = rng.random_range(1..4);
    (0..n).map(|_| PARTS[rng.random_range(0..PARTS.len())]).collect()
}

pub fn random_profile(rng: &mut StdRng, index: usize) -> LearnerProfile {
    let grade = rng.random_range(1..=12);
    let mut p = default_profile(&format!("learner-{index}-{}", random_text(rng)), grade, &[], "")
        .unwrap();
    p.cognitive.bloom_level = BloomLevel::ALL[rng.random_range(0..6)];
    for _ in 0..rng.random_range(0..5) {
        let t = random_text(rng);
        p.mark_weak_topic(&t);
        p.cognitive
            .knowledge_tracing
            .insert(t, random_trait(rng));
    }
    for _ in 0..rng.random_range(0..3) {
        p.cognitive
            .knowledge_state
            .insert(random_text(rng), random_text(rng));
    }
    p.behavioral.session_count = rng.random_range(0..500);
    p.behavioral.question_total = rng.random_range(0..2000);
    p.behavioral.question_frequency =
        p.behavioral.question_total as f64 / p.behavioral.session_count.max(1) as f64;
    for _ in 0..rng.random_range(0..3) {
        p.behavioral
            .tool_usage
            .insert(random_text(rng), rng.random_range(1..50));
    }
    let moods = [
        Mood::Confident,
        Mood::Curious,
        Mood::Frustrated,
        Mood::Anxious,
        Mood::Engaged,
        Mood::Neutral,
    ];
    p.emotional.current_mood = moods[rng.random_range(0..moods.len())];
    p.emotional.self_efficacy = random_trait(rng);
    p.emotional.motivation = random_trait(rng);
    p.emotional.frustration_count = rng.random_range(0..20);
    p.metacognitive.self_regulation = random_trait(rng);
    p.metacognitive.reflection_ability = random_trait(rng);
    p.metacognitive.preferred_strategy = PREF_GRID[rng.random_range(0..3)];
    p.contextual.subject_focus = (0..rng.random_range(0..3)).map(|_| random_text(rng)).collect();
    p.contextual.learning_goal = if rng.random_bool(0.5) { random_text(rng) } else { String::new() };
    p.updated_at = DateTime::<Utc>::UNIX_EPOCH
        + Duration::seconds(rng.random_range(0..2_000_000_000))
        + Duration::nanoseconds(rng.random_range(0..1_000_000_000));
    p
}

/// Every bounded trait of `p`.
pub fn unit_traits(p: &LearnerProfile) -> Vec<(String, f64)> {
    let mut out = vec![
        ("self_efficacy".to_string(), p.emotional.self_efficacy.value()),
        ("motivation".to_string(), p.emotional.motivation.value()),
        ("self_regulation".to_string(), p.metacognitive.self_regulation.value()),
        ("reflection_ability".to_string(), p.metacognitive.reflection_ability.value()),
    ];
    for (k, v) in &p.cognitive.knowledge_tracing {
        out.push((format!("knowledge_tracing[{k}]"), v.value()));
    }
    out
}
