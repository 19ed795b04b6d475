//! Plain-text serialization for tabular games.
//!
//! Grammar (fixed section order; `#` starts a comment anywhere on a line;
//! blank lines are ignored):
//!
//! ```text
//! mpg-game 1
//! agents N
//! states S
//! actions A_0 A_1 ... A_{N-1}
//! gamma G
//! rho
//! <S probabilities on one line>
//! factorization S_0 ... S_{N-1}        # optional; product must equal S
//! transition
//! <S * prod(A_i) lines of S probabilities each;
//!  outer index = state, inner = joint action with agent 0 most significant>
//! reward 0
//! <S lines of prod(A_i) values each>
//! reward 1
//! ...
//! potential                            # optional
//! <S lines of prod(A_i) values each>
//! ```
//!
//! Floats are written with the shortest representation that parses back to
//! the identical value, so a write→parse round trip is bit-exact.

use super::{Factorization, GameError, StatePotential, TabularGame};
use crate::scalar::{real, Scalar};
use std::fmt::Write as _;

/// Parse/serialization errors; parse failures carry the 1-based line.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GameIoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unexpected end of file: {expecting}")]
    UnexpectedEof { expecting: String },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("factorization covers {covered} global states but the game declares {declared}")]
    FactorizationMismatch { covered: usize, declared: usize },
}

/// A parsed game file: the game itself plus optional structure metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct GameFile<T> {
    pub game: TabularGame<T>,
    pub factorization: Option<Factorization>,
    pub potential: Option<StatePotential<T>>,
}

struct Lines<'a> {
    // (1-based line number, content with comments stripped)
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let items = text
            .lines()
            .enumerate()
            .filter_map(|(idx, raw)| {
                let stripped = raw.split('#').next().unwrap_or("").trim();
                (!stripped.is_empty()).then_some((idx + 1, stripped))
            })
            .collect();
        Lines { items, pos: 0 }
    }

    fn next(&mut self, expecting: &str) -> Result<(usize, &'a str), GameIoError> {
        let item = self
            .items
            .get(self.pos)
            .copied()
            .ok_or_else(|| GameIoError::UnexpectedEof { expecting: expecting.to_string() })?;
        self.pos += 1;
        Ok(item)
    }

    fn finished(&self) -> bool {
        self.pos >= self.items.len()
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> GameIoError {
    GameIoError::Parse { line, message: message.into() }
}

fn keyword_line<'a>(
    lines: &mut Lines<'a>,
    keyword: &str,
) -> Result<(usize, Vec<&'a str>), GameIoError> {
    let (line, text) = lines.next(&format!("`{keyword}` line"))?;
    let mut parts = text.split_whitespace();
    let head = parts.next().unwrap_or("");
    if head != keyword {
        return Err(parse_err(line, format!("expected `{keyword}`, found `{head}`")));
    }
    Ok((line, parts.collect()))
}

fn parse_usize(line: usize, token: &str, what: &str) -> Result<usize, GameIoError> {
    token
        .parse()
        .map_err(|_| parse_err(line, format!("{what}: `{token}` is not a non-negative integer")))
}

fn parse_float<T: Scalar>(line: usize, token: &str, what: &str) -> Result<T, GameIoError> {
    let v: f64 = token
        .parse()
        .map_err(|_| parse_err(line, format!("{what}: `{token}` is not a number")))?;
    Ok(real::<T>(v))
}

fn float_row<T: Scalar>(
    lines: &mut Lines<'_>,
    expected: usize,
    what: &str,
) -> Result<Vec<T>, GameIoError> {
    let (line, text) = lines.next(what)?;
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() != expected {
        return Err(parse_err(
            line,
            format!("{what}: expected {expected} values, found {}", tokens.len()),
        ));
    }
    tokens.iter().map(|t| parse_float::<T>(line, t, what)).collect()
}

/// Parses the documented text format into a [`GameFile`]. All tensors are
/// validated by the game constructor; a declared factorization must cover
/// the declared state count.
pub fn parse_game_text<T: Scalar>(text: &str) -> Result<GameFile<T>, GameIoError> {
    let mut lines = Lines::new(text);

    let (line, header) = lines.next("`mpg-game 1` header")?;
    if header != "mpg-game 1" {
        return Err(parse_err(line, format!("expected header `mpg-game 1`, found `{header}`")));
    }

    let (line, args) = keyword_line(&mut lines, "agents")?;
    if args.len() != 1 {
        return Err(parse_err(line, "`agents` takes exactly one count"));
    }
    let n_agents = parse_usize(line, args[0], "agent count")?;

    let (line, args) = keyword_line(&mut lines, "states")?;
    if args.len() != 1 {
        return Err(parse_err(line, "`states` takes exactly one count"));
    }
    let n_states = parse_usize(line, args[0], "state count")?;

    let (line, args) = keyword_line(&mut lines, "actions")?;
    if args.len() != n_agents {
        return Err(parse_err(
            line,
            format!("`actions` needs {n_agents} counts, found {}", args.len()),
        ));
    }
    let action_counts: Vec<usize> = args
        .iter()
        .map(|t| parse_usize(line, t, "action count"))
        .collect::<Result<_, _>>()?;
    let n_joint: usize = action_counts.iter().product();

    let (line, args) = keyword_line(&mut lines, "gamma")?;
    if args.len() != 1 {
        return Err(parse_err(line, "`gamma` takes exactly one value"));
    }
    let gamma = parse_float::<T>(line, args[0], "discount factor")?;

    keyword_line(&mut lines, "rho").and_then(|(line, args)| {
        if args.is_empty() {
            Ok(())
        } else {
            Err(parse_err(line, "`rho` takes no inline values; they follow on the next line"))
        }
    })?;
    let rho = float_row::<T>(&mut lines, n_states, "initial distribution row")?;

    // Optional factorization, then the mandatory transition section.
    let mut factorization = None;
    let (line, text) = lines.next("`factorization` or `transition`")?;
    let mut parts = text.split_whitespace();
    match parts.next().unwrap_or("") {
        "factorization" => {
            let counts: Vec<usize> = parts
                .map(|t| parse_usize(line, t, "local state count"))
                .collect::<Result<_, _>>()?;
            if counts.len() != n_agents {
                return Err(parse_err(
                    line,
                    format!("`factorization` needs {n_agents} counts, found {}", counts.len()),
                ));
            }
            let fact = Factorization { state_counts: counts };
            if fact.n_global() != n_states {
                return Err(GameIoError::FactorizationMismatch {
                    covered: fact.n_global(),
                    declared: n_states,
                });
            }
            factorization = Some(fact);
            let (line, text) = lines.next("`transition`")?;
            if text != "transition" {
                return Err(parse_err(line, format!("expected `transition`, found `{text}`")));
            }
        }
        "transition" => {
            if parts.next().is_some() {
                return Err(parse_err(line, "`transition` takes no arguments"));
            }
        }
        other => {
            return Err(parse_err(
                line,
                format!("expected `factorization` or `transition`, found `{other}`"),
            ))
        }
    }

    let mut transition = Vec::with_capacity(n_states * n_joint * n_states);
    for s in 0..n_states {
        for a in 0..n_joint {
            transition.extend(float_row::<T>(
                &mut lines,
                n_states,
                &format!("transition row (state {s}, joint action {a})"),
            )?);
        }
    }

    let mut rewards = Vec::with_capacity(n_agents);
    for i in 0..n_agents {
        let (line, args) = keyword_line(&mut lines, "reward")?;
        if args.len() != 1 || parse_usize(line, args[0], "reward agent index")? != i {
            return Err(parse_err(line, format!("expected `reward {i}`")));
        }
        let mut table = Vec::with_capacity(n_states * n_joint);
        for s in 0..n_states {
            table.extend(float_row::<T>(
                &mut lines,
                n_joint,
                &format!("reward row (agent {i}, state {s})"),
            )?);
        }
        rewards.push(table);
    }

    let mut potential = None;
    if !lines.finished() {
        let (line, text) = lines.next("`potential` or end of file")?;
        if text != "potential" {
            return Err(parse_err(line, format!("expected `potential` or end of file, found `{text}`")));
        }
        let mut values = Vec::with_capacity(n_states * n_joint);
        for s in 0..n_states {
            values.extend(float_row::<T>(
                &mut lines,
                n_joint,
                &format!("potential row (state {s})"),
            )?);
        }
        potential = Some(StatePotential { values });
    }
    if !lines.finished() {
        let (line, text) = lines.next("end of file")?;
        return Err(parse_err(line, format!("unexpected trailing content `{text}`")));
    }

    let game = TabularGame::new(action_counts, n_states, gamma, rho, transition, rewards)?;
    Ok(GameFile { game, factorization, potential })
}

fn push_row<T: Scalar>(out: &mut String, row: &[T]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v}").expect("writing to String cannot fail");
    }
    out.push('\n');
}

/// Serializes a [`GameFile`] to the documented text format; the output
/// parses back to a bit-identical `GameFile`.
pub fn write_game_text<T: Scalar>(file: &GameFile<T>) -> String {
    let game = &file.game;
    let mut out = String::new();
    out.push_str("mpg-game 1\n");
    writeln!(out, "agents {}", game.n_agents()).unwrap();
    writeln!(out, "states {}", game.n_states()).unwrap();
    out.push_str("actions");
    for a in game.action_counts() {
        write!(out, " {a}").unwrap();
    }
    out.push('\n');
    writeln!(out, "gamma {}", game.gamma()).unwrap();
    out.push_str("rho\n");
    push_row(&mut out, game.rho());
    if let Some(fact) = &file.factorization {
        out.push_str("factorization");
        for s in &fact.state_counts {
            write!(out, " {s}").unwrap();
        }
        out.push('\n');
    }
    out.push_str("transition\n");
    for s in 0..game.n_states() {
        for a in 0..game.n_joint_actions() {
            push_row(&mut out, game.transition_row(s, a));
        }
    }
    let n_joint = game.n_joint_actions();
    for i in 0..game.n_agents() {
        writeln!(out, "reward {i}").unwrap();
        for s in 0..game.n_states() {
            push_row(&mut out, &game.reward_table(i)[s * n_joint..(s + 1) * n_joint]);
        }
    }
    if let Some(phi) = &file.potential {
        out.push_str("potential\n");
        for s in 0..game.n_states() {
            push_row(&mut out, &phi.values[s * n_joint..(s + 1) * n_joint]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::generate::{random_mixed_game, RandomGameSpec};
    use super::super::tests::two_state_game;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let compiled = random_mixed_game::<f64>(
            &RandomGameSpec {
                states_per_agent: vec![2, 2],
                actions_per_agent: vec![2, 3],
                gamma: 0.95,
            },
            &mut rng,
        )
        .compile()
        .unwrap();
        let file = GameFile {
            game: compiled.game,
            factorization: Some(compiled.factorization),
            potential: Some(compiled.potential),
        };
        let text = write_game_text(&file);
        let parsed: GameFile<f64> = parse_game_text(&text).unwrap();
        assert_eq!(parsed, file);
        // And writing again is byte-identical.
        assert_eq!(write_game_text(&parsed), text);
    }

    #[test]
    fn roundtrip_without_optional_sections() {
        let file = GameFile { game: two_state_game(), factorization: None, potential: None };
        let parsed: GameFile<f64> = parse_game_text(&write_game_text(&file)).unwrap();
        assert_eq!(parsed, file);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let file = GameFile { game: two_state_game(), factorization: None, potential: None };
        let text = write_game_text(&file);
        let commented: String = text
            .lines()
            .map(|l| format!("{l}   # trailing note\n\n"))
            .collect::<String>()
            .replace("mpg-game 1   # trailing note", "# leading banner\nmpg-game 1");
        let parsed: GameFile<f64> = parse_game_text(&commented).unwrap();
        assert_eq!(parsed, file);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_game_text::<f64>("mpg-game 2\n").unwrap_err();
        assert!(matches!(err, GameIoError::Parse { line: 1, .. }), "{err:?}");

        let text = "mpg-game 1\nagents 1\nstates 1\nactions 2\ngamma 0.9\nrho\n1.0\ntransition\n1.0\nbogus\n";
        let err = parse_game_text::<f64>(text).unwrap_err();
        match err {
            GameIoError::Parse { line, message } => {
                assert_eq!(line, 10);
                assert!(message.contains("transition row"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_file_reports_what_was_expected() {
        let text = "mpg-game 1\nagents 1\nstates 2\nactions 2\ngamma 0.9\nrho\n0.5 0.5\n";
        let err = parse_game_text::<f64>(text).unwrap_err();
        assert!(matches!(err, GameIoError::UnexpectedEof { .. }), "{err:?}");
    }

    #[test]
    fn invalid_tensors_are_rejected_by_game_validation() {
        // Transition row does not sum to one.
        let text = "mpg-game 1\nagents 1\nstates 1\nactions 1\ngamma 0.9\nrho\n1.0\ntransition\n0.7\nreward 0\n0.0\n";
        let err = parse_game_text::<f64>(text).unwrap_err();
        assert!(matches!(err, GameIoError::Game(_)), "{err:?}");
    }

    #[test]
    fn factorization_must_cover_state_count() {
        let text = "mpg-game 1\nagents 2\nstates 3\nactions 2 2\ngamma 0.9\nrho\n0.4 0.3 0.3\nfactorization 2 2\ntransition\n";
        let err = parse_game_text::<f64>(text).unwrap_err();
        assert!(matches!(err, GameIoError::FactorizationMismatch { covered: 4, declared: 3 }));
    }

    #[test]
    fn trailing_content_is_rejected() {
        let file = GameFile { game: two_state_game(), factorization: None, potential: None };
        let mut text = write_game_text(&file);
        text.push_str("stray\n");
        let err = parse_game_text::<f64>(&text).unwrap_err();
        assert!(matches!(err, GameIoError::Parse { .. }), "{err:?}");
    }

    #[test]
    fn f32_games_roundtrip_too() {
        let text = "mpg-game 1\nagents 1\nstates 2\nactions 2\ngamma 0.75\nrho\n0.125 0.875\ntransition\n0.25 0.75\n0.1 0.9\n1 0\n0.625 0.375\nreward 0\n0.5 -1.5\n2.25 0.333\n";
        let parsed: GameFile<f32> = parse_game_text(text).unwrap();
        let rewritten = write_game_text(&parsed);
        let reparsed: GameFile<f32> = parse_game_text(&rewritten).unwrap();
        assert_eq!(parsed, reparsed);
    }
}
