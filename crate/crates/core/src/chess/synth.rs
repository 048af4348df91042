//! Seeded self-play game generator.
//!
//! Produces PGN corpora for experiments when no recorded games are at hand.
//! Each side samples from a softmax over a one-ply heuristic (material won,
//! pieces left hanging, checks, development, pawn advances), so the games
//! are noisy but far from uniformly random.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chess::board::{Board, Color, PieceKind, Square};
use crate::chess::labels::piece_value;
use crate::chess::movegen::{apply_unchecked, in_check, is_attacked, legal_moves, MoveRecord};
use crate::chess::pgn::{write_pgn, Game};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SynthConfig {
    pub games: usize,
    pub seed: u64,
    pub max_plies: usize,
    /// Softmax temperature in pawn units.
    pub temperature: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            games: 500,
            seed: 7,
            max_plies: 200,
            temperature: 0.3,
        }
    }
}

fn centrality(sq: Square) -> f64 {
    let r = f64::from(sq.rank()) - 3.5;
    let f = f64::from(sq.file()) - 3.5;
    -(r.abs() + f.abs())
}

fn score_move(board: &Board, mv: MoveRecord, ply: usize) -> f64 {
    let us = board.side_to_move;
    let them = us.opposite();
    let piece = board.get(mv.from).expect("move starts on a piece");
    let value = f64::from(piece_value(piece.kind));
    let mut score = 0.0;

    let captured = match board.get(mv.to) {
        Some(p) => f64::from(piece_value(p.kind)),
        None if piece.kind == PieceKind::Pawn && mv.from.file() != mv.to.file() => 1.0,
        None => 0.0,
    };
    score += captured;
    if let Some(p) = mv.promotion {
        score += f64::from(piece_value(p)) - 1.0;
    }

    let next = apply_unchecked(board, mv);
    if is_attacked(&next, mv.to, them) {
        let defended = is_attacked(&next, mv.to, us);
        let moved_value = mv.promotion.map_or(value, |p| f64::from(piece_value(p)));
        score -= if defended {
            (moved_value - 1.0).max(0.0) * 0.8
        } else {
            moved_value * 0.9
        };
    }
    if piece.kind != PieceKind::King && is_attacked(board, mv.from, them) && !is_attacked(board, mv.from, us) {
        score += value * 0.6;
    }

    if in_check(&next, them) {
        score += if legal_moves(&next).is_empty() { 100.0 } else { 0.3 };
    } else if next.pieces().filter(|(_, p)| p.color == them).count() <= 3 && legal_moves(&next).is_empty() {
        // Stalemating is a waste unless already behind.
        score -= 2.0;
    }

    let opening = ply < 24;
    match piece.kind {
        PieceKind::Knight | PieceKind::Bishop => {
            score += 0.15 * (centrality(mv.to) - centrality(mv.from));
            let home = if us == Color::White { 0 } else { 7 };
            if opening && mv.from.rank() == home {
                score += 0.35;
            }
        }
        PieceKind::Pawn => {
            let advance = match us {
                Color::White => f64::from(mv.to.rank()),
                Color::Black => f64::from(7 - mv.to.rank()),
            };
            let central = (2..=5).contains(&mv.to.file());
            score += if opening && central { 0.3 } else { 0.05 * advance };
        }
        PieceKind::King => {
            if (mv.from.file() as i8 - mv.to.file() as i8).abs() == 2 {
                score += 0.8;
            } else if opening {
                score -= 0.6;
            }
        }
        PieceKind::Queen if opening => score -= 0.3,
        _ => {}
    }
    score
}

/// The generator's move probabilities in `board`.
pub fn move_distribution(board: &Board, ply: usize, temperature: f64) -> Vec<(MoveRecord, f64)> {
    let moves = legal_moves(board);
    let scores: Vec<f64> = moves.iter().map(|&m| score_move(board, m, ply)).collect();
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| ((s - best) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    moves.into_iter().zip(weights).map(|(m, w)| (m, w / total)).collect()
}

fn sample_move(board: &Board, ply: usize, temperature: f64, rng: &mut ChaCha8Rng) -> MoveRecord {
    let dist = move_distribution(board, ply, temperature);
    let mut pick = rng.random::<f64>();
    for (m, p) in &dist {
        if pick < *p {
            return *m;
        }
        pick -= p;
    }
    dist.last().expect("nonempty move list").0
}

fn bare_kings(board: &Board) -> bool {
    board.pieces().all(|(_, p)| p.kind == PieceKind::King)
}

/// Plays one game; returns the game and its PGN result string.
pub fn play_game(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> (Game, &'static str) {
    let mut board = Board::initial();
    let mut moves = Vec::new();
    let mut result = "1/2-1/2";
    for ply in 0..cfg.max_plies {
        if legal_moves(&board).is_empty() {
            result = if in_check(&board, board.side_to_move) {
                match board.side_to_move {
                    Color::White => "0-1",
                    Color::Black => "1-0",
                }
            } else {
                "1/2-1/2"
            };
            break;
        }
        if bare_kings(&board) {
            break;
        }
        let mv = sample_move(&board, ply, cfg.temperature, rng);
        board = apply_unchecked(&board, mv);
        moves.push(mv);
    }
    (Game::new(Board::initial(), moves), result)
}

pub fn generate_games(cfg: &SynthConfig) -> Vec<(Game, &'static str)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.games)
        .map(|i| {
            let (mut game, result) = play_game(cfg, &mut rng);
            game.headers = vec![
                ("Event".into(), "Synthetic self-play".into()),
                ("Site".into(), "-".into()),
                ("Round".into(), (i + 1).to_string()),
                ("White".into(), "synth".into()),
                ("Black".into(), "synth".into()),
                ("Result".into(), result.into()),
            ];
            (game, result)
        })
        .collect()
}

/// Generates a whole corpus as PGN text.
pub fn generate_pgn(cfg: &SynthConfig) -> String {
    generate_games(cfg).iter().map(|(g, r)| write_pgn(g, r)).collect()
}
