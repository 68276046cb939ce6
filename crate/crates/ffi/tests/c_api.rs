use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use conbandit_ffi::*;

fn last_error() -> String {
    let p = cb_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn stochastic_env(seed: u64) -> *mut CbEnv {
    let mut env = ptr::null_mut();
    let status = unsafe { cb_env_synthetic_stochastic(2, 2, 0.5, seed, &mut env) };
    assert_eq!(status, CbStatus::Ok);
    env
}

#[test]
fn env_queries() {
    let env = stochastic_env(1);
    let (mut n_items, mut n_kt) = (0, 0);
    unsafe {
        assert_eq!(cb_env_size(env, &mut n_items, &mut n_kt), CbStatus::Ok);
        assert_eq!((n_items, n_kt), (4, 2));
        let mut value = 0.0;
        let mut best = CbAction {
            kind: CbActionKind::KeyTerm,
            id: 9,
        };
        assert_eq!(cb_env_optimal(env, &mut value, &mut best), CbStatus::Ok);
        assert_eq!(value, 1.0);
        assert_eq!(
            best,
            CbAction {
                kind: CbActionKind::Item,
                id: 3
            }
        );
        let kt = CbAction {
            kind: CbActionKind::KeyTerm,
            id: 1,
        };
        assert_eq!(cb_env_expected_reward(env, kt, &mut value), CbStatus::Ok);
        assert_eq!(value, 0.5);
        let mut reward = -1.0;
        assert_eq!(cb_env_step(env, kt, 1, &mut reward), CbStatus::Ok);
        assert!(reward == 0.0 || reward == 1.0);
        cb_env_free(env);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut env = ptr::null_mut();
    let status = unsafe { cb_env_synthetic_stochastic(2, 2, 1.5, 0, &mut env) };
    assert_eq!(status, CbStatus::InvalidInput);
    assert!(env.is_null());
    assert!(last_error().contains("lambda out of range"));

    let status = unsafe { cb_env_size(ptr::null(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(status, CbStatus::NullPointer);
    assert!(last_error().contains("env"));

    let env = stochastic_env(0);
    let mut value = 0.0;
    let bad = CbAction {
        kind: CbActionKind::Item,
        id: 99,
    };
    unsafe {
        assert_eq!(cb_env_expected_reward(env, bad, &mut value), CbStatus::InvalidInput);
        cb_env_free(env);
    }
}

#[test]
fn select_update_loop_matches_run_episode() {
    let env_a = stochastic_env(5);
    let env_b = stochastic_env(5);
    unsafe {
        let mut pa = ptr::null_mut();
        let mut pb = ptr::null_mut();
        assert_eq!(cb_policy_new(env_a, CbPolicyKind::HierUcb, 1.0, 1.0, &mut pa), CbStatus::Ok);
        assert_eq!(cb_policy_new(env_b, CbPolicyKind::HierUcb, 1.0, 1.0, &mut pb), CbStatus::Ok);

        let mut trace = ptr::null_mut();
        assert_eq!(cb_run_episode(env_b, pb, 40, &mut trace), CbStatus::Ok);
        let mut len = 0;
        assert_eq!(cb_trace_len(trace, &mut len), CbStatus::Ok);
        assert_eq!(len, 40);

        let mut row = std::mem::zeroed::<CbTraceRow>();
        for round in 1..=40u64 {
            let mut action = std::mem::zeroed::<CbAction>();
            assert_eq!(cb_policy_select(pa, env_a, &mut action), CbStatus::Ok);
            let mut reward = 0.0;
            assert_eq!(cb_env_step(env_a, action, round, &mut reward), CbStatus::Ok);
            assert_eq!(cb_policy_update(pa, env_a, action, reward), CbStatus::Ok);
            assert_eq!(cb_trace_row(trace, round as usize - 1, &mut row), CbStatus::Ok);
            assert_eq!(row.round, round);
            assert_eq!(row.action, action);
            assert_eq!(row.reward, reward);
        }
        assert_eq!(row.action.kind, CbActionKind::Item);
        assert_eq!(cb_trace_row(trace, 40, &mut row), CbStatus::InvalidInput);

        let mut found = false;
        let mut point = 0;
        assert_eq!(cb_trace_switch_point(trace, &mut found, &mut point), CbStatus::Ok);
        assert!(found && point <= 40);

        cb_trace_free(trace);
        cb_policy_free(pa);
        cb_policy_free(pb);
        cb_env_free(env_a);
        cb_env_free(env_b);
    }
}

#[test]
fn contextual_policy_needs_contexts_dimension() {
    let mut env = ptr::null_mut();
    unsafe {
        assert_eq!(
            cb_env_synthetic_contextual(2, 3, 4, 0.5, 0.1, 3, &mut env),
            CbStatus::Ok
        );
        let mut p = ptr::null_mut();
        assert_eq!(cb_policy_new(env, CbPolicyKind::HierLinucb, 0.5, 0.25, &mut p), CbStatus::Ok);
        let mut trace = ptr::null_mut();
        assert_eq!(cb_run_episode(env, p, 25, &mut trace), CbStatus::Ok);
        cb_trace_free(trace);
        cb_policy_free(p);
        let mut p = ptr::null_mut();
        assert_eq!(cb_policy_new(env, CbPolicyKind::Ucb, 1.0, -1.0, &mut p), CbStatus::InvalidInput);
        assert!(p.is_null());
        cb_env_free(env);
    }
}

#[test]
fn aggregates_and_intervals() {
    let r = [4.0, 3.0, 2.0, 1.0];
    let w = [1.0, 1.0, 1.0, 1.0];
    let mut out = 0.0;
    unsafe {
        assert_eq!(cb_simple_average(r.as_ptr(), 4, &mut out), CbStatus::Ok);
        assert_eq!(out, 2.5);
        assert_eq!(cb_top_alpha_average(r.as_ptr(), 4, 0.5, &mut out), CbStatus::Ok);
        assert_eq!(out, 3.5);
        assert_eq!(cb_weighted_average(r.as_ptr(), w.as_ptr(), 4, &mut out), CbStatus::Ok);
        assert_eq!(out, 2.5);
        assert_eq!(cb_simple_average(ptr::null(), 0, &mut out), CbStatus::InvalidInput);
        let (mut lo, mut hi) = (0.0, 0.0);
        let s = [0.0, 1.0];
        assert_eq!(cb_confidence_interval(s.as_ptr(), 2, 0.95, &mut lo, &mut hi), CbStatus::Ok);
        assert!((lo + 0.48).abs() < 0.005 && (hi - 1.48).abs() < 0.005);
    }
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/conbandit.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "cb_last_error",
        "cb_env_synthetic_stochastic",
        "cb_env_synthetic_contextual",
        "cb_env_free",
        "cb_env_size",
        "cb_env_expected_reward",
        "cb_env_optimal",
        "cb_env_step",
        "cb_policy_new",
        "cb_policy_free",
        "cb_policy_select",
        "cb_policy_update",
        "cb_run_episode",
        "cb_trace_free",
        "cb_trace_len",
        "cb_trace_row",
        "cb_trace_switch_point",
        "cb_simple_average",
        "cb_top_alpha_average",
        "cb_weighted_average",
        "cb_confidence_interval",
        "typedef struct CbEnv CbEnv",
        "CB_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

/// Compiles and runs a small C client against the static library when a C
/// compiler and the archive are available.
#[test]
fn c_client_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    let archive = profile_dir.join("libconbandit_ffi.a");
    let cc_ok = Command::new("cc").arg("--version").output().is_ok();
    if !cc_ok || !archive.exists() {
        eprintln!("skipping: cc or {} unavailable", archive.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "conbandit.h"
int main(void) {
    CbEnv *env = NULL;
    CbPolicy *policy = NULL;
    CbTrace *trace = NULL;
    if (cb_env_synthetic_stochastic(10, 10, 0.5, 7, &env) != CB_STATUS_OK) return 1;
    if (cb_policy_new(env, CB_POLICY_KIND_HIER_UCB, 1.0, 1.0, &policy) != CB_STATUS_OK) return 2;
    if (cb_run_episode(env, policy, 500, &trace) != CB_STATUS_OK) return 3;
    size_t len = 0;
    cb_trace_len(trace, &len);
    CbTraceRow row;
    cb_trace_row(trace, len - 1, &row);
    if (cb_env_synthetic_stochastic(1, 1, 2.0, 0, &env) != CB_STATUS_INVALID_INPUT) return 4;
    printf("%zu %.6f %s\n", len, row.cum_regret, cb_last_error());
    cb_trace_free(trace);
    cb_policy_free(policy);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("client");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&archive)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C client failed to compile");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "client exited with {:?}", out.status);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("500 "), "{stdout}");
    assert!(stdout.contains("lambda out of range"), "{stdout}");
}
