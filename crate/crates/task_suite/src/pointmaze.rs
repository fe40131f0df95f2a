//! 2D point-mass mazes with sparse success rewards. The agent applies
//! bounded accelerations; reaching the goal cell's radius pays reward 1 and
//! terminates the episode. A waypoint PD controller over the BFS path
//! serves as the scripted expert.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::{Environment, StepResult, TaskError, TaskSpec};

pub const DT: f64 = 0.1;
pub const MAX_SPEED: f64 = 2.0;
pub const AGENT_RADIUS: f64 = 0.15;
pub const GOAL_RADIUS: f64 = 0.45;
/// Per-step velocity retention (ground friction).
pub const DAMPING: f64 = 0.95;

pub const UMAZE_LAYOUT: &[&str] = &[
    "######", //
    "#OOOO#", //
    "#O##O#", //
    "#S##G#", //
    "######",
];

pub const MEDIUM_LAYOUT: &[&str] = &[
    "########", //
    "#S#OOOO#", //
    "#O#O##O#", //
    "#OOO#OO#", //
    "##O##O##", //
    "#OO#OOO#", //
    "#O#OO#G#", //
    "########",
];

pub struct Maze {
    cells: Vec<Vec<bool>>, // true = wall
    pub start: (usize, usize),
    pub goal: (usize, usize),
    pub width: usize,
    pub height: usize,
}

impl Maze {
    pub fn parse(layout: &[&str]) -> Maze {
        let height = layout.len();
        let width = layout[0].len();
        let mut cells = vec![vec![false; width]; height];
        let mut start = None;
        let mut goal = None;
        for (r, row) in layout.iter().enumerate() {
            assert_eq!(row.len(), width, "ragged maze layout");
            for (c, ch) in row.chars().enumerate() {
                match ch {
                    '#' => cells[r][c] = true,
                    'S' => start = Some((c, r)),
                    'G' => goal = Some((c, r)),
                    'O' | ' ' | '.' => {}
                    other => panic!("bad maze char {other}"),
                }
            }
        }
        Maze {
            cells,
            start: start.expect("maze needs a start"),
            goal: goal.expect("maze needs a goal"),
            width,
            height,
        }
    }

    pub fn is_wall_cell(&self, col: isize, row: isize) -> bool {
        if col < 0 || row < 0 || col as usize >= self.width || row as usize >= self.height {
            return true;
        }
        self.cells[row as usize][col as usize]
    }

    fn blocked(&self, x: f64, y: f64) -> bool {
        for (dx, dy) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
            let px = x + dx * AGENT_RADIUS;
            let py = y + dy * AGENT_RADIUS;
            if self.is_wall_cell(px.floor() as isize, py.floor() as isize) {
                return true;
            }
        }
        false
    }

    pub fn cell_center(cell: (usize, usize)) -> (f64, f64) {
        (cell.0 as f64 + 0.5, cell.1 as f64 + 0.5)
    }

    /// BFS shortest path (4-connected) from `from` to the goal, returned as
    /// the sequence of cells to visit after `from`.
    pub fn path_to_goal(&self, from: (usize, usize)) -> Vec<(usize, usize)> {
        let mut prev = vec![vec![None::<(usize, usize)>; self.width]; self.height];
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(from);
        prev[from.1][from.0] = Some(from);
        while let Some((c, r)) = queue.pop_front() {
            if (c, r) == self.goal {
                break;
            }
            for (dc, dr) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                let nc = c as isize + dc;
                let nr = r as isize + dr;
                if !self.is_wall_cell(nc, nr) && prev[nr as usize][nc as usize].is_none() {
                    prev[nr as usize][nc as usize] = Some((c, r));
                    queue.push_back((nc as usize, nr as usize));
                }
            }
        }
        let mut path = Vec::new();
        let mut cur = self.goal;
        if prev[cur.1][cur.0].is_none() {
            return path; // unreachable; empty path
        }
        while cur != from {
            path.push(cur);
            cur = prev[cur.1][cur.0].unwrap();
        }
        path.reverse();
        path
    }
}

pub struct PointMazeEnv {
    spec: TaskSpec,
    maze: Maze,
    pos: (f64, f64),
    vel: (f64, f64),
    steps: usize,
    done: bool,
}

impl PointMazeEnv {
    pub fn new(spec: TaskSpec, layout: &[&str]) -> PointMazeEnv {
        let maze = Maze::parse(layout);
        PointMazeEnv { spec, maze, pos: (0.0, 0.0), vel: (0.0, 0.0), steps: 0, done: true }
    }

    pub fn maze(&self) -> &Maze {
        &self.maze
    }

    pub fn position(&self) -> (f64, f64) {
        self.pos
    }

    pub fn set_state(&mut self, pos: (f64, f64), vel: (f64, f64)) {
        self.pos = pos;
        self.vel = vel;
        self.steps = 0;
        self.done = false;
    }

    fn observation(&self) -> Vec<f32> {
        vec![self.pos.0 as f32, self.pos.1 as f32, self.vel.0 as f32, self.vel.1 as f32]
    }

    fn at_goal(&self) -> bool {
        let (gx, gy) = Maze::cell_center(self.maze.goal);
        let dx = self.pos.0 - gx;
        let dy = self.pos.1 - gy;
        (dx * dx + dy * dy).sqrt() <= GOAL_RADIUS
    }

    fn current_cell(&self) -> (usize, usize) {
        (self.pos.0.floor() as usize, self.pos.1.floor() as usize)
    }
}

impl Environment for PointMazeEnv {
    fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4d41_5a45_5f56_3100);
        let (cx, cy) = Maze::cell_center(self.maze.start);
        self.pos = (cx + rng.gen_range(-0.25..0.25), cy + rng.gen_range(-0.25..0.25));
        self.vel = (0.0, 0.0);
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: &[f32]) -> Result<StepResult, TaskError> {
        if self.done {
            return Err(TaskError::EpisodeOver);
        }
        let ax = (action.first().copied().unwrap_or(0.0) as f64).clamp(-1.0, 1.0);
        let ay = (action.get(1).copied().unwrap_or(0.0) as f64).clamp(-1.0, 1.0);

        self.vel.0 = (self.vel.0 * DAMPING + ax * DT).clamp(-MAX_SPEED, MAX_SPEED);
        self.vel.1 = (self.vel.1 * DAMPING + ay * DT).clamp(-MAX_SPEED, MAX_SPEED);

        // axis-separated movement with wall stops
        let nx = self.pos.0 + self.vel.0 * DT;
        if self.maze.blocked(nx, self.pos.1) {
            self.vel.0 = 0.0;
        } else {
            self.pos.0 = nx;
        }
        let ny = self.pos.1 + self.vel.1 * DT;
        if self.maze.blocked(self.pos.0, ny) {
            self.vel.1 = 0.0;
        } else {
            self.pos.1 = ny;
        }

        self.steps += 1;
        let success = self.at_goal();
        let timeout = !success && self.steps >= self.spec.horizon;
        self.done = success || timeout;
        Ok(StepResult {
            obs: self.observation(),
            reward: if success { 1.0 } else { 0.0 },
            terminal: success,
            timeout,
        })
    }

    fn expert_action(&mut self) -> Vec<f32> {
        let cell = self.current_cell();
        let path = self.maze.path_to_goal(cell);
        let target = if path.is_empty() {
            Maze::cell_center(self.maze.goal)
        } else if path.len() == 1 {
            Maze::cell_center(self.maze.goal)
        } else {
            Maze::cell_center(path[0])
        };
        let kp = 2.5;
        let kd = 1.6;
        let ax = kp * (target.0 - self.pos.0) - kd * self.vel.0;
        let ay = kp * (target.1 - self.pos.1) - kd * self.vel.1;
        vec![ax.clamp(-1.0, 1.0) as f32, ay.clamp(-1.0, 1.0) as f32]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{make_env, task_spec};

    #[test]
    fn reset_inside_start_cell_with_zero_velocity() {
        let mut env = make_env("pointmaze-u").unwrap();
        for seed in 0..10 {
            let obs = env.reset(seed);
            assert_eq!(obs[2], 0.0);
            assert_eq!(obs[3], 0.0);
            let maze = Maze::parse(UMAZE_LAYOUT);
            let (cx, cy) = Maze::cell_center(maze.start);
            assert!((obs[0] as f64 - cx).abs() < 0.5);
            assert!((obs[1] as f64 - cy).abs() < 0.5);
        }
    }

    #[test]
    fn zero_action_from_rest_stays_put() {
        let mut env = make_env("pointmaze-u").unwrap();
        let obs = env.reset(0);
        let step = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(step.obs, obs);
        assert_eq!(step.reward, 0.0);
        assert!(!step.terminal);
    }

    #[test]
    fn placed_at_goal_pays_and_terminates() {
        let spec = task_spec("pointmaze-u").unwrap();
        let mut env = PointMazeEnv::new(spec, UMAZE_LAYOUT);
        let goal = Maze::cell_center(env.maze().goal);
        env.set_state(goal, (0.0, 0.0));
        let step = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(step.reward, 1.0);
        assert!(step.terminal);
        assert!(!step.timeout);
        assert!(matches!(env.step(&[0.0, 0.0]), Err(TaskError::EpisodeOver)));
    }

    #[test]
    fn goal_reachable_by_bfs_in_both_layouts() {
        for layout in [UMAZE_LAYOUT, MEDIUM_LAYOUT] {
            let maze = Maze::parse(layout);
            let path = maze.path_to_goal(maze.start);
            assert!(!path.is_empty(), "goal unreachable");
            assert_eq!(*path.last().unwrap(), maze.goal);
        }
    }

    #[test]
    fn expert_reaches_goal_in_both_mazes() {
        for name in ["pointmaze-u", "pointmaze-medium"] {
            let mut env = make_env(name).unwrap();
            for seed in 0..5 {
                env.reset(seed);
                let mut solved = false;
                for _ in 0..env.spec().horizon {
                    let a = env.expert_action();
                    let step = env.step(&a).unwrap();
                    if step.terminal {
                        solved = true;
                        break;
                    }
                    if step.timeout {
                        break;
                    }
                }
                assert!(solved, "expert failed {name} seed {seed}");
            }
        }
    }

    #[test]
    fn sparse_rewards_are_binary_and_success_terminates() {
        let mut env = make_env("pointmaze-u").unwrap();
        env.reset(1);
        for _ in 0..50 {
            let step = env.step(&[0.3, -0.8]).unwrap();
            assert!(step.reward == 0.0 || step.reward == 1.0);
            if step.reward == 1.0 {
                assert!(step.terminal);
                break;
            }
            if step.timeout {
                break;
            }
        }
    }
}
