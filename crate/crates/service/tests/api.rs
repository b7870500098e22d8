mod support;

use axum::http::StatusCode;
use serde_json::{json, Value};
use std::sync::Arc;
use support::{Client, Step, WALKTHROUGH};
use tilewise::corpus::{GAUSSIAN_SOURCE, UNSHARP_SOURCE};
use tilewise_service::api::router;
use tilewise_service::store::SessionStore;

fn client() -> Client {
    Client { app: router(Arc::new(SessionStore::in_memory())) }
}

fn option_ids(state: &Value) -> Vec<String> {
    state["options"].as_array().unwrap().iter().map(|o| o["id"].as_str().unwrap().to_string()).collect()
}

#[tokio::test]
async fn walkthrough_transcript_reaches_done() {
    let c = client();
    let (id, state) = c.create(GAUSSIAN_SOURCE).await;
    assert_eq!(state["instruction"], "Choose or type the tile range of Func blur.");
    assert_eq!(state["highlighted_func"], "blur");
    assert_eq!(state["phase"], "tile_range");
    assert_eq!(state["done"], false);
    assert!(state["dependency_graph"]["nodes"]
        .as_array()
        .unwrap()
        .iter()
        .any(|n| n["name"] == "blur" && n["highlighted"] == true));
    assert_eq!(state["loop_nest"][0]["id"], "blur.vec");
    for o in state["options"].as_array().unwrap() {
        let c = &o["cost"];
        assert_eq!(
            c["total"].as_f64().unwrap(),
            c["load"].as_f64().unwrap() + c["store"].as_f64().unwrap() + c["compute"].as_f64().unwrap()
        );
    }

    let mut last = state;
    for option in WALKTHROUGH {
        let r = c.choose(&id, option).await;
        assert_eq!(r.status, StatusCode::OK, "{option}: {}", r.text);
        last = r.json();
    }
    assert_eq!(last["instruction"], "Choose or type the tile range of Func kernel.");
    let first = option_ids(&last)[0].clone();
    let done = c.choose(&id, &first).await.json();
    assert_eq!(done["instruction"], "Done!");
    assert_eq!(done["done"], true);
    assert_eq!(done["options"], json!([]));

    let script = c.get(&format!("/sessions/{id}/schedule")).await;
    assert_eq!(script.status, StatusCode::OK);
    assert!(script.text.starts_with("compute blur at root\ntile blur 8 4\n"), "{}", script.text);

    let run = c.get(&format!("/sessions/{id}/run?size=64x64")).await;
    assert_eq!(run.status, StatusCode::OK, "{}", run.text);
    let run = run.json();
    let blur = run["counters"].as_array().unwrap().iter().find(|f| f["name"] == "blur").unwrap().clone();
    assert_eq!(blur["evaluations"], 4096);
    assert!(run["total_evaluations"].as_i64().unwrap() > 4096);
}

#[tokio::test]
async fn error_statuses() {
    let c = client();
    assert_eq!(c.get("/sessions/nope").await.status, StatusCode::NOT_FOUND);
    assert_eq!(c.choose("nope", "x").await.status, StatusCode::NOT_FOUND);

    let bad = c
        .post("/sessions", json!({ "pipeline_source": "pipeline p\nfunc f(x, y) = f(x - 1, y)\noutput f : 4x4\n" }))
        .await;
    assert_eq!(bad.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(bad.json()["error"].as_str().unwrap().contains("cycl"), "{}", bad.text);
    let machine =
        c.post("/sessions", json!({ "pipeline_source": GAUSSIAN_SOURCE, "machine": { "vector_width": 0 } })).await;
    assert_eq!(machine.status, StatusCode::UNPROCESSABLE_ENTITY, "{}", machine.text);

    let (id, state) = c.create(GAUSSIAN_SOURCE).await;
    assert_eq!(c.tile(&id, 0, 4).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(c.tile(&id, 300, 4).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(c.undo(&id).await.status, StatusCode::CONFLICT);
    assert_eq!(c.get(&format!("/sessions/{id}/run?size=big")).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(c.get(&format!("/sessions/{id}/run?size=5000x5000")).await.status, StatusCode::UNPROCESSABLE_ENTITY);

    // An option from before an undo is stale once the phase has moved on.
    let stale = option_ids(&state)[1].clone();
    assert_eq!(c.choose(&id, &stale).await.status, StatusCode::OK);
    assert_eq!(c.undo(&id).await.status, StatusCode::OK);
    assert_eq!(c.choose(&id, "blur_y/inline").await.status, StatusCode::CONFLICT);
    assert_eq!(c.choose(&id, &stale).await.status, StatusCode::OK);
    assert_eq!(c.choose(&id, &stale).await.status, StatusCode::CONFLICT);
    let after = c.choose(&id, "blur_y/inline").await;
    assert_eq!(after.status, StatusCode::OK);
    assert_eq!(c.tile(&id, 4, 4).await.status, StatusCode::CONFLICT, "location phase takes no tile");

    // Finish, then every mutation but undo conflicts.
    let mut state = after.json();
    while state["done"] == false {
        let first = option_ids(&state)[0].clone();
        state = c.choose(&id, &first).await.json();
    }
    assert_eq!(c.choose(&id, "kernel/inline").await.status, StatusCode::CONFLICT);
    assert_eq!(c.tile(&id, 4, 4).await.status, StatusCode::CONFLICT);
    assert_eq!(c.undo(&id).await.status, StatusCode::OK);
}

#[tokio::test]
async fn get_after_mutation_returns_the_same_state() {
    let c = client();
    let (id, _) = c.create(UNSHARP_SOURCE).await;
    let steps = [
        Step::Tile(4, 52),
        Step::Choose("ratio/at/unsharp.outer:0".into()),
        Step::Tile(20, 31),
        Step::Undo,
        Step::Tile(20, 31),
    ];
    for step in &steps {
        let r = c.apply(&id, step).await;
        assert_eq!(r.status, StatusCode::OK, "{step:?}: {}", r.text);
        assert_eq!(c.get(&format!("/sessions/{id}")).await.json(), r.json());
    }
    let state = c.get(&format!("/sessions/{id}")).await.json();
    let sizes: Vec<(i64, i64)> = state["tile_viz"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| (t["width"].as_i64().unwrap(), t["height"].as_i64().unwrap()))
        .collect();
    assert!(sizes.contains(&(640, 31)) && sizes.contains(&(32, 1)), "{sizes:?}");
    assert_eq!(state["highlighted_func"], "sharpen");
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client { app: router(Arc::new(SessionStore::open(dir.path()).unwrap())) };
    let (id, _) = c.create(GAUSSIAN_SOURCE).await;
    let (other, _) = c.create(UNSHARP_SOURCE).await;
    for option in &WALKTHROUGH[..3] {
        assert_eq!(c.choose(&id, option).await.status, StatusCode::OK);
    }
    assert_eq!(c.tile(&other, 4, 52).await.status, StatusCode::OK);
    let before = (c.get(&format!("/sessions/{id}")).await.json(), c.get(&format!("/sessions/{other}")).await.json());
    drop(c);

    let store = SessionStore::open(dir.path()).unwrap();
    let mut ids = vec![id.clone(), other.clone()];
    ids.sort();
    assert_eq!(store.ids(), ids);
    let c = Client { app: router(Arc::new(store)) };
    let after = (c.get(&format!("/sessions/{id}")).await.json(), c.get(&format!("/sessions/{other}")).await.json());
    assert_eq!(before, after);
    assert_eq!(c.get(&format!("/sessions/{id}/schedule")).await.text.lines().count(), 4);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_mutations_are_serialized() {
    let c = Arc::new(client());
    // Distinct sessions driven in parallel each end where a lone run ends.
    let (solo, _) = c.create(GAUSSIAN_SOURCE).await;
    for option in WALKTHROUGH {
        c.choose(&solo, option).await;
    }
    let expected = c.get(&format!("/sessions/{solo}")).await.json();
    let mut tasks = Vec::new();
    for _ in 0..8 {
        let c = c.clone();
        tasks.push(tokio::spawn(async move {
            let (id, _) = c.create(GAUSSIAN_SOURCE).await;
            for option in WALKTHROUGH {
                assert_eq!(c.choose(&id, option).await.status, StatusCode::OK);
            }
            c.get(&format!("/sessions/{id}")).await.json()
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), expected);
    }

    // Racing the same choice on one session: exactly one wins.
    let (id, _) = c.create(GAUSSIAN_SOURCE).await;
    let mut racers = Vec::new();
    for _ in 0..8 {
        let (c, id) = (c.clone(), id.clone());
        racers.push(tokio::spawn(async move { c.choose(&id, WALKTHROUGH[0]).await.status }));
    }
    let mut statuses = Vec::new();
    for r in racers {
        statuses.push(r.await.unwrap());
    }
    assert_eq!(statuses.iter().filter(|s| **s == StatusCode::OK).count(), 1);
    assert_eq!(statuses.iter().filter(|s| **s == StatusCode::CONFLICT).count(), 7);
    assert_eq!(c.get(&format!("/sessions/{id}/schedule")).await.text, "compute blur at root\ntile blur 8 4\n");
}
