mod support;

use indexmap::IndexMap;
use reqwest::header::{AUTHORIZATION, CONTENT_TYPE, COOKIE};
use serde_json::{json, Value};

use annobench::quality::{GoldItem, PrestudyConfig, QualityControlConfig, SurveyPage, SurveyTemplate};
use annobench::scheme::{AnnotationScheme, RawLabel, SchemeKind};
use annobench::session::TaskView;
use annobench::{gallery, load_config};

use support::*;

fn gold(id: &str, answer: &str) -> GoldItem {
    let mut instance = IndexMap::new();
    instance.insert("id".to_string(), json!(id));
    instance.insert("text".to_string(), json!("a gold sentence"));
    let mut answers = IndexMap::new();
    answers.insert("s".to_string(), json!(answer));
    GoldItem { instance, answers }
}

fn journey_server_config(dir: &std::path::Path) -> annobench::TaskConfig {
    let mut cfg = simple_task(dir, 3);
    let mut comments = AnnotationScheme::new("comments", SchemeKind::FreeText);
    comments.required = true;
    cfg.quality_control = Some(QualityControlConfig {
        prestudy: Some(PrestudyConfig {
            test_items: vec![gold("g1", "a"), gold("g2", "b")],
            pass_threshold: 1.0,
        }),
        attention: None,
        pre_surveys: vec![
            SurveyPage {
                title: "Consent".into(),
                questions: vec![],
                template: Some(SurveyTemplate::Consent),
            },
            SurveyPage {
                title: "About you".into(),
                questions: vec![],
                template: Some(SurveyTemplate::Demographics),
            },
        ],
        post_surveys: vec![SurveyPage {
            title: "Feedback".into(),
            questions: vec![comments],
            template: None,
        }],
    });
    cfg.server.admin_password = Some("pw".into());
    cfg.server.completion_code = Some("DONE-42".into());
    cfg
}

#[tokio::test(flavor = "multi_thread")]
async fn full_journey_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(open(journey_server_config(dir.path()))).await;
    let client = client();
    let cookie = url_login(&client, &server, "P1").await;

    let mut steps = Vec::new();
    loop {
        let view = get_task(&client, &server, &cookie).await;
        let step = serde_json::to_value(&view).unwrap()["step"].as_str().unwrap().to_string();
        if let TaskView::Complete { completion_code, .. } = &view {
            assert_eq!(completion_code.as_deref(), Some("DONE-42"));
            break;
        }
        steps.push(step);
        let labels = answer_for(&server.wb, &view);
        let (status, body) = post_submit(&client, &server, &cookie, &submission_json(&view, &labels)).await;
        assert_eq!(status, 200, "{body}");
    }
    assert_eq!(
        steps,
        ["survey", "survey", "prestudy", "prestudy", "instance", "instance", "instance", "survey"]
    );

    let resp = client
        .get(server.url("/admin/progress"))
        .header(AUTHORIZATION, basic("admin", "pw"))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 200);
    let progress: Value = resp.json().await.unwrap();
    assert_eq!(progress["total_annotations"], 3);
    assert_eq!(progress["users"][0]["complete"], true);

    let resp = client
        .post(server.url("/admin/export?format=csv"))
        .header(AUTHORIZATION, basic("admin", "pw"))
        .send()
        .await
        .unwrap();
    let summary: Value = resp.json().await.unwrap();
    assert_eq!(summary["records"], 3);
    assert_eq!(summary["prestudy_records"], 2);
    assert_eq!(summary["survey_records"], 3);
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = simple_task(dir.path(), 3);
    cfg.server.admin_password = Some("pw".into());
    let server = TestServer::start(open(cfg)).await;
    let client = client();

    let r = client.get(server.url("/task")).send().await.unwrap();
    assert_eq!(r.status(), 401);
    let r = client.post(server.url("/submit")).json(&json!({"item_id": "d000"})).send().await.unwrap();
    assert_eq!(r.status(), 401);
    let r = client.get(server.url("/no/such/thing")).send().await.unwrap();
    assert_eq!(r.status(), 404);
    assert_eq!(r.json::<Value>().await.unwrap()["error"], "not_found");
    let r = client.get(server.url("/admin/progress")).send().await.unwrap();
    assert_eq!(r.status(), 401);
    let r = client
        .get(server.url("/admin/progress"))
        .header(AUTHORIZATION, basic("admin", "wrong"))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 401);
    let r = client
        .post(server.url("/admin/export?format=xml"))
        .header(AUTHORIZATION, basic("admin", "pw"))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 422);

    let cookie = url_login(&client, &server, "W").await;
    let view = get_task(&client, &server, &cookie).await;
    let (status, body) =
        post_submit(&client, &server, &cookie, &submission_json(&view, &[RawLabel::new("s", json!("nope"))])).await;
    assert_eq!(status, 422);
    assert_eq!(body["schemes"][0]["scheme"], "s");
    // Wrong item id is stale.
    let (status, _) = post_submit(
        &client,
        &server,
        &cookie,
        &json!({"item_id": "d002", "labels": [{"scheme": "s", "value": "a"}]}),
    )
    .await;
    assert_eq!(status, 409);

    // Bad login, duplicate signup.
    let r = client
        .post(server.url("/signup"))
        .json(&json!({"email": "x@y.org", "password": "p"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 200);
    let r = client
        .post(server.url("/signup"))
        .json(&json!({"email": "x@y.org", "password": "p"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 409);
    let r = client
        .post(server.url("/login"))
        .json(&json!({"email": "x@y.org", "password": "bad"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 401);

    // Logout ends the session.
    let r = client.post(server.url("/logout")).header(COOKIE, &cookie).send().await.unwrap();
    assert_eq!(r.status(), 200);
    let r = client.get(server.url("/task")).header(COOKIE, &cookie).send().await.unwrap();
    assert_eq!(r.status(), 401);
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn admin_disabled_without_password() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(open(simple_task(dir.path(), 2))).await;
    let r = client()
        .get(server.url("/admin/progress"))
        .header(AUTHORIZATION, basic("admin", "anything"))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 403);
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn best_equal_worst_is_422() {
    let dir = tempfile::tempdir().unwrap();
    let path = gallery::scaffold("best_worst", dir.path()).unwrap();
    let mut cfg = load_config(&path).unwrap();
    cfg.server.output_dir = dir.path().join("out");
    let server = TestServer::start(open(cfg)).await;
    let client = client();
    let cookie = url_login(&client, &server, "bw").await;
    let view = get_task(&client, &server, &cookie).await;
    let w = &widgets(&view)[0];
    let c = w.choices[0].clone();
    let (status, body) = post_submit(
        &client,
        &server,
        &cookie,
        &submission_json(&view, &[RawLabel::new(&w.scheme, json!({"best": c, "worst": c}))]),
    )
    .await;
    assert_eq!(status, 422);
    assert!(body["schemes"][0]["message"].as_str().unwrap().contains("differ"), "{body}");
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn html_form_flow() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(open(simple_task(dir.path(), 2))).await;
    let client = client();
    let cookie = url_login(&client, &server, "F").await;

    let page = client
        .get(server.url("/task"))
        .header(COOKIE, &cookie)
        .header("accept", "text/html")
        .send()
        .await
        .unwrap();
    assert_eq!(page.status(), 200);
    let html = page.text().await.unwrap();
    assert!(html.contains("d000"), "page shows the item");

    let r = client
        .post(server.url("/submit"))
        .header(COOKIE, &cookie)
        .header(CONTENT_TYPE, "application/x-www-form-urlencoded")
        .body("item_id=d000&revision=0&s=b")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 303);
    let view = get_task(&client, &server, &cookie).await;
    assert_eq!(view.item_id(), Some("d001"));

    let r = client
        .post(server.url("/navigate"))
        .header(COOKIE, &cookie)
        .header(CONTENT_TYPE, "application/x-www-form-urlencoded")
        .body("direction=back")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 303);
    let TaskView::Instance { model, .. } = get_task(&client, &server, &cookie).await else { panic!() };
    assert_eq!(model.prefill, vec![RawLabel::new("s", json!("b"))]);
    server.stop().await;
}
