//! C ABI over the blocks environment and the machine tooling.
//!
//! Every function returns an [`HfStatus`] code. On failure a message is kept
//! per thread and can be read with [`hf_last_error_message`]. Handles are
//! opaque and must be released with their matching `*_free` function.
//!
//! # Safety
//!
//! Pointer arguments must be null or valid for the access the function
//! performs. Handles must come from this library and must not be used after
//! being freed. String arguments must be NUL-terminated.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hamforge::blocks::{BlocksAction, BlocksConfig, EnvSession};
use hamforge::ham::{from_dot, from_text, to_dot, to_text, validate, MachineGraph};
use hamforge::machine_gen::{build_standard_machine, enumerate_machines, GenParams};
use hamforge::Error;

/// Status codes returned by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    EpisodeDone = 3,
    Parse = 4,
    InvalidMachine = 5,
    BufferTooSmall = 6,
    Panic = 7,
    Internal = 8,
}

/// Values accepted by [`hf_env_preset`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfPreset {
    TrainingSmall = 0,
    TrainingLarge = 1,
    Test = 2,
}

/// Snapshot of the manipulator.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HfObservation {
    pub manip_col: u32,
    pub manip_row: u32,
    pub magnet_on: bool,
    pub holding: bool,
    pub steps_taken: u32,
    pub done: bool,
}

/// An environment session.
pub struct HfEnv {
    config: BlocksConfig,
    layout_seed: u64,
    session: EnvSession,
}

/// A machine graph.
pub struct HfMachine {
    graph: MachineGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: HfStatus, msg: impl Into<String>) -> HfStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> HfStatus {
    let status = match &e {
        Error::Config(_) | Error::Experiment(_) | Error::IllegalAction(_) => HfStatus::InvalidArgument,
        Error::EpisodeDone => HfStatus::EpisodeDone,
        Error::Parse { .. } => HfStatus::Parse,
        Error::InvalidMachine(_) => HfStatus::InvalidMachine,
        _ => HfStatus::Internal,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> HfStatus) -> HfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(HfStatus::Panic, "panic inside hamforge"))
}

macro_rules! deref {
    ($p:expr) => {
        match unsafe { $p.as_ref() } {
            Some(v) => v,
            None => return fail(HfStatus::NullPointer, concat!("`", stringify!($p), "` is null")),
        }
    };
}

macro_rules! deref_mut {
    ($p:expr) => {
        match unsafe { $p.as_mut() } {
            Some(v) => v,
            None => return fail(HfStatus::NullPointer, concat!("`", stringify!($p), "` is null")),
        }
    };
}

macro_rules! out {
    ($p:expr, $v:expr) => {{
        if $p.is_null() {
            return fail(HfStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        }
        unsafe { $p.write($v) };
    }};
}

fn text_arg<'a>(p: *const c_char) -> Result<&'a str, HfStatus> {
    if p.is_null() {
        return Err(fail(HfStatus::NullPointer, "string argument is null"));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| fail(HfStatus::InvalidArgument, "string argument is not UTF-8"))
}

/// Copies `s` plus a NUL into `buf`. `out_len` always receives the length
/// without the NUL, so callers can size a second attempt.
fn write_text(s: &str, buf: *mut c_char, cap: usize, out_len: *mut usize) -> HfStatus {
    out!(out_len, s.len());
    if buf.is_null() || cap < s.len() + 1 {
        return fail(HfStatus::BufferTooSmall, format!("{} bytes needed", s.len() + 1));
    }
    unsafe {
        ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
        *buf.add(s.len()) = 0;
    }
    HfStatus::Ok
}

/// Message for the last failure on this thread, or null. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn hf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn new_env(config: BlocksConfig, layout_seed: u64, out: *mut *mut HfEnv) -> HfStatus {
    if out.is_null() {
        return fail(HfStatus::NullPointer, "`out` is null");
    }
    match EnvSession::new(config, layout_seed) {
        Ok(session) => {
            let env = Box::new(HfEnv {
                config,
                layout_seed,
                session,
            });
            unsafe { out.write(Box::into_raw(env)) };
            HfStatus::Ok
        }
        Err(e) => from_error(e),
    }
}

/// Creates an environment. The cube layout is drawn from `layout_seed`.
#[no_mangle]
pub unsafe extern "C" fn hf_env_new(
    grid_height: u32,
    grid_width: u32,
    num_cubes: u32,
    episode_length: u32,
    tower_target: u32,
    layout_seed: u64,
    out: *mut *mut HfEnv,
) -> HfStatus {
    guard(|| {
        let config = BlocksConfig {
            grid_height: grid_height as usize,
            grid_width: grid_width as usize,
            num_cubes: num_cubes as usize,
            episode_length: episode_length as usize,
            tower_target: tower_target as usize,
        };
        new_env(config, layout_seed, out)
    })
}

/// Creates one of the preset environments; `preset` is an `HfPreset` value.
#[no_mangle]
pub unsafe extern "C" fn hf_env_preset(preset: u32, layout_seed: u64, out: *mut *mut HfEnv) -> HfStatus {
    guard(|| {
        let config = match preset {
            p if p == HfPreset::TrainingSmall as u32 => BlocksConfig::training_small(),
            p if p == HfPreset::TrainingLarge as u32 => BlocksConfig::training_large(),
            p if p == HfPreset::Test as u32 => BlocksConfig::test(),
            p => return fail(HfStatus::InvalidArgument, format!("unknown preset {p}")),
        };
        new_env(config, layout_seed, out)
    })
}

/// Restores the initial layout.
#[no_mangle]
pub unsafe extern "C" fn hf_env_reset(env: *mut HfEnv) -> HfStatus {
    guard(|| {
        let env = deref_mut!(env);
        match EnvSession::new(env.config, env.layout_seed) {
            Ok(s) => {
                env.session = s;
                HfStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Applies action `action` (0 Left, 1 Right, 2 Up, 3 Down, 4 ToggleMagnet).
#[no_mangle]
pub unsafe extern "C" fn hf_env_step(
    env: *mut HfEnv,
    action: u32,
    out_reward: *mut f64,
    out_done: *mut bool,
) -> HfStatus {
    guard(|| {
        let env = deref_mut!(env);
        let Some(&a) = BlocksAction::ALL.get(action as usize) else {
            return fail(HfStatus::InvalidArgument, format!("unknown action {action}"));
        };
        if out_reward.is_null() || out_done.is_null() {
            return fail(HfStatus::NullPointer, "output pointer is null");
        }
        match env.session.step(a) {
            Ok((r, done)) => {
                out!(out_reward, r);
                out!(out_done, done);
                HfStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn hf_env_observe(env: *const HfEnv, out: *mut HfObservation) -> HfStatus {
    guard(|| {
        let env = deref!(env);
        let s = env.session.state();
        out!(
            out,
            HfObservation {
                manip_col: s.manip().col as u32,
                manip_row: s.manip().row as u32,
                magnet_on: s.magnet_on(),
                holding: s.holding(),
                steps_taken: s.steps_taken() as u32,
                done: env.session.is_done(),
            }
        );
        HfStatus::Ok
    })
}

/// Whether a cube occupies the cell; rows count from the floor.
#[no_mangle]
pub unsafe extern "C" fn hf_env_cell(env: *const HfEnv, col: u32, row: u32, out_cube: *mut bool) -> HfStatus {
    guard(|| {
        let env = deref!(env);
        let s = env.session.state();
        if col as usize >= s.width() || row as usize >= s.height() {
            return fail(
                HfStatus::InvalidArgument,
                format!("cell ({col}, {row}) outside the grid"),
            );
        }
        out!(out_cube, s.has_cube(col as usize, row as usize));
        HfStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn hf_env_cluster(env: *const HfEnv, out_height: *mut u32, out_holding: *mut bool) -> HfStatus {
    guard(|| {
        let c = deref!(env).session.cluster();
        out!(out_height, c.manip_height as u32);
        out!(out_holding, c.holding);
        HfStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn hf_env_free(env: *mut HfEnv) {
    if !env.is_null() {
        drop(unsafe { Box::from_raw(env) });
    }
}

fn new_machine(graph: MachineGraph, out: *mut *mut HfMachine) -> HfStatus {
    out!(out, Box::into_raw(Box::new(HfMachine { graph })));
    HfStatus::Ok
}

/// Parses a machine from its text form.
#[no_mangle]
pub unsafe extern "C" fn hf_machine_parse(text: *const c_char, out: *mut *mut HfMachine) -> HfStatus {
    guard(|| {
        let text = match text_arg(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match from_text(text) {
            Ok(g) => new_machine(g, out),
            Err(e) => from_error(e),
        }
    })
}

/// Parses a machine from Graphviz DOT produced by [`hf_machine_to_dot`].
#[no_mangle]
pub unsafe extern "C" fn hf_machine_parse_dot(text: *const c_char, out: *mut *mut HfMachine) -> HfStatus {
    guard(|| {
        let text = match text_arg(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match from_dot(text) {
            Ok(g) => new_machine(g, out),
            Err(e) => from_error(e),
        }
    })
}

/// The looping machine that chooses among all five primitive actions.
#[no_mangle]
pub unsafe extern "C" fn hf_machine_standard(out: *mut *mut HfMachine) -> HfStatus {
    guard(|| match build_standard_machine(&BlocksAction::ALL) {
        Ok(g) => new_machine(g, out),
        Err(e) => from_error(e),
    })
}

/// Sets `out_valid`; when invalid, the violations are also available from
/// [`hf_last_error_message`].
#[no_mangle]
pub unsafe extern "C" fn hf_machine_validate(m: *const HfMachine, out_valid: *mut bool) -> HfStatus {
    guard(|| {
        let report = validate(&deref!(m).graph);
        out!(out_valid, report.is_valid());
        if !report.is_valid() {
            set_error(report.to_string());
        }
        HfStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn hf_machine_counts(
    m: *const HfMachine,
    out_vertices: *mut u32,
    out_edges: *mut u32,
) -> HfStatus {
    guard(|| {
        let g = &deref!(m).graph;
        out!(out_vertices, g.len() as u32);
        out!(out_edges, g.edge_count() as u32);
        HfStatus::Ok
    })
}

/// Writes the text form and a NUL into `buf` of `cap` bytes. `out_len`
/// always receives the length without the NUL; `HfStatus::BufferTooSmall`
/// means the call should be repeated with a larger buffer.
#[no_mangle]
pub unsafe extern "C" fn hf_machine_to_text(
    m: *const HfMachine,
    buf: *mut c_char,
    cap: usize,
    out_len: *mut usize,
) -> HfStatus {
    guard(|| write_text(&to_text(&deref!(m).graph), buf, cap, out_len))
}

/// DOT counterpart of [`hf_machine_to_text`].
#[no_mangle]
pub unsafe extern "C" fn hf_machine_to_dot(
    m: *const HfMachine,
    buf: *mut c_char,
    cap: usize,
    out_len: *mut usize,
) -> HfStatus {
    guard(|| write_text(&to_dot(&deref!(m).graph), buf, cap, out_len))
}

#[no_mangle]
pub unsafe extern "C" fn hf_machine_free(m: *mut HfMachine) {
    if !m.is_null() {
        drop(unsafe { Box::from_raw(m) });
    }
}

/// Counts candidate machines. Bit `i` of `action_mask` enables action `i`
/// in the order used by [`hf_env_step`].
#[no_mangle]
pub unsafe extern "C" fn hf_enumerate_count(
    max_vertices: u32,
    action_mask: u32,
    per_action: u32,
    max_choice: u32,
    out_count: *mut u64,
) -> HfStatus {
    guard(|| {
        if action_mask >> BlocksAction::ALL.len() != 0 {
            return fail(
                HfStatus::InvalidArgument,
                format!("action mask {action_mask:#x} has unknown bits"),
            );
        }
        let actions: Vec<BlocksAction> = BlocksAction::ALL
            .iter()
            .enumerate()
            .filter(|(i, _)| action_mask >> i & 1 == 1)
            .map(|(_, &a)| a)
            .collect();
        let params = GenParams::new(
            max_vertices as usize,
            &actions,
            per_action as usize,
            max_choice as usize,
        );
        if let Err(e) = params.validate() {
            return from_error(e);
        }
        out!(out_count, enumerate_machines(&params).count() as u64);
        HfStatus::Ok
    })
}
