//! Walk a fixed 15x9 maze with `U`/`D`/`L`/`R` bytes. Other bytes are
//! ignored; walking into a wall ends the game. Reaching `E` is the bug.

use std::sync::OnceLock;

use crate::blk;
use crate::fuzzer::{CrashKind, Exec, Outcome};
use crate::runtime::{site_id, AnnotationEvent, Macro};

pub const WIDTH: usize = 15;
pub const HEIGHT: usize = 9;

pub const GRID: [&str; HEIGHT] = [
    "S..############",
    "##.#....#######",
    "...#.##.#######",
    "#..##...#######",
    "#.........#####",
    "#####.#######.#",
    "#####........##",
    "#.#.######.####",
    "#........#....E",
];

pub const SITE_FILE: &str = "targets/maze.c";
pub const SITE_FUNCTION: &str = "maze_step";
pub const MAX_SNIPPET: &str = "IJON_MAX(x + y * WIDTH);";

pub const CRASH_FRAMES: [&str; 3] = ["maze_win", "maze_step", "maze_main"];

pub fn progress_site() -> u64 {
    static ID: OnceLock<u64> = OnceLock::new();
    *ID.get_or_init(|| site_id(SITE_FILE, SITE_FUNCTION, Macro::Max, MAX_SNIPPET))
}

fn cell(x: usize, y: usize) -> u8 {
    GRID[y].as_bytes()[x]
}

pub fn start() -> (usize, usize) {
    find(b'S')
}

pub fn exit() -> (usize, usize) {
    find(b'E')
}

fn find(c: u8) -> (usize, usize) {
    for (y, row) in GRID.iter().enumerate() {
        if let Some(x) = row.bytes().position(|b| b == c) {
            return (x, y);
        }
    }
    unreachable!("maze is missing {}", c as char)
}

pub fn run(input: &[u8], x: &mut Exec<'_>) -> Outcome {
    blk!(x, "maze_main");
    let (mut px, mut py) = start();
    for &b in input {
        blk!(x, "maze_step");
        let (nx, ny) = match b {
            b'U' => {
                blk!(x, "maze_up");
                (px as isize, py as isize - 1)
            }
            b'D' => {
                blk!(x, "maze_down");
                (px as isize, py as isize + 1)
            }
            b'L' => {
                blk!(x, "maze_left");
                (px as isize - 1, py as isize)
            }
            b'R' => {
                blk!(x, "maze_right");
                (px as isize + 1, py as isize)
            }
            _ => {
                blk!(x, "maze_ignore");
                continue;
            }
        };
        let inside = nx >= 0 && ny >= 0 && (nx as usize) < WIDTH && (ny as usize) < HEIGHT;
        if !inside || cell(nx as usize, ny as usize) == b'#' {
            blk!(x, "maze_lose");
            return Outcome::Ok;
        }
        px = nx as usize;
        py = ny as usize;
        x.annotate(AnnotationEvent::new(progress_site(), Macro::Max, (px + py * WIDTH) as i64));
        if cell(px, py) == b'E' {
            return Outcome::crash(CrashKind::Assert, &CRASH_FRAMES);
        }
    }
    blk!(x, "maze_timeout");
    Outcome::Ok
}
