//! Multi-room gridworld environment: generation, dynamics, rendering and the
//! shortest-path expert.

pub mod agent;
pub mod expert;
pub mod render;
pub mod task;
pub mod world;

pub use agent::{replay, step, Action, AgentState, Heading};
pub use expert::{check_subtask_success, expert_actions, expert_trajectory, shortest_path, ExpertTrajectory, SUCCESS_RADIUS};
pub use render::{render, render_view, view_cells, Image, Observation, RenderConfig};
pub use task::{generate_episode, generate_task, instruction_for, Task, TaskConfig};
pub use world::{generate_world, Cell, Color, GridWorld, ObjectKind, Pos, Room, RoomKind, WorldConfig, WorldObject};
