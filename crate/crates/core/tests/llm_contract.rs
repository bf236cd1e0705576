use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use gossipnet::env::{Purchase, Quality};
use gossipnet::llm::client::ScriptedClient;
use gossipnet::llm::parse::serialize_decision;
use gossipnet::llm::stub::{StubReply, StubServer};
use gossipnet::llm::{
    parse_decision, render, ChatClient, DecisionSchema, EndpointConfig, HttpChatClient, LlmError,
    ParsedDecision, ParsedValue, RenderFlags, TemplateId,
};
use gossipnet::model::{BinaryAction, HorizonKind, Tone};
use proptest::prelude::*;

fn endpoint(stub: &StubServer) -> EndpointConfig {
    let mut c = EndpointConfig::new(stub.base_url(), "stub-model");
    c.backoff_ms = 1;
    c.timeout_secs = 5.0;
    c
}

#[test]
fn stub_round_trip_sends_chat_completion_body() {
    let stub = StubServer::fixed("hello there").unwrap();
    let mut client = HttpChatClient::new(endpoint(&stub)).unwrap();
    assert_eq!(client.complete("sys", "usr").unwrap(), "hello there");
    let req = &stub.requests()[0];
    assert_eq!(req["model"], "stub-model");
    assert_eq!(req["messages"][0]["role"], "system");
    assert_eq!(req["messages"][0]["content"], "sys");
    assert_eq!(req["messages"][1]["role"], "user");
    assert_eq!(req["messages"][1]["content"], "usr");
    assert_eq!(req["temperature"], 0.0);
}

#[test]
fn server_errors_exhaust_retries_as_transport_failure() {
    let stub = StubServer::start(|_| StubReply::Status(500)).unwrap();
    let mut cfg = endpoint(&stub);
    cfg.max_retries = 2;
    let mut client = HttpChatClient::new(cfg).unwrap();
    let err = client.complete("s", "u").unwrap_err();
    assert!(
        matches!(err, LlmError::Transport { attempts: 3, .. }),
        "{err:?}"
    );
    assert_eq!(stub.hits(), 3);
}

#[test]
fn transient_failure_is_retried() {
    let calls = Arc::new(Mutex::new(0));
    let c = calls.clone();
    let stub = StubServer::start(move |_| {
        let mut n = c.lock().unwrap();
        *n += 1;
        if *n == 1 {
            StubReply::Status(503)
        } else {
            StubReply::Content("ok".into())
        }
    })
    .unwrap();
    let mut client = HttpChatClient::new(endpoint(&stub)).unwrap();
    assert_eq!(client.complete("s", "u").unwrap(), "ok");
    assert_eq!(stub.hits(), 2);
}

#[test]
fn missing_auth_token_fails_before_any_request() {
    let stub = StubServer::fixed("x").unwrap();
    let mut cfg = endpoint(&stub);
    cfg.auth_env = Some("GOSSIPNET_TEST_TOKEN_THAT_IS_NEVER_SET".into());
    assert!(matches!(
        HttpChatClient::new(cfg),
        Err(LlmError::AuthMissing(_))
    ));
    assert_eq!(stub.hits(), 0);
}

#[test]
fn unknown_endpoint_keys_are_rejected() {
    let bad = r#"{"base_url": "http://x", "model": "m", "temprature": 0.5}"#;
    assert!(serde_json::from_str::<EndpointConfig>(bad).is_err());
}

#[test]
fn every_template_renders_without_residue() {
    for id in TemplateId::ALL {
        let vars: BTreeMap<String, String> = id
            .placeholders()
            .into_iter()
            .map(|k| (k.clone(), format!("<{k}>")))
            .collect();
        for bits in 0..8u8 {
            for horizon in [HorizonKind::Finite, HorizonKind::InfiniteTruncated] {
                let flags = RenderFlags {
                    gossip: bits & 1 != 0,
                    equilibrium_knowledge: bits & 2 != 0,
                    convention: bits & 4 != 0,
                    horizon,
                };
                let text =
                    render(id.body(), &vars, &flags).unwrap_or_else(|e| panic!("{id:?}: {e}"));
                assert!(!text.contains('$'), "{id:?} leaves a placeholder: {text}");
                assert!(!text.contains("[HORIZON-TYPE]"), "{id:?}");
                assert!(
                    !text.lines().any(|l| l.starts_with('@')),
                    "{id:?} leaks a directive"
                );
            }
        }
    }
}

#[test]
fn missing_binding_is_an_error() {
    let id = TemplateId::DonationDonor;
    let flags = RenderFlags {
        gossip: true,
        equilibrium_knowledge: false,
        convention: false,
        horizon: HorizonKind::Finite,
    };
    assert!(matches!(
        render(id.body(), &BTreeMap::new(), &flags),
        Err(LlmError::MissingVariable(_))
    ));
}

#[test]
fn fenced_and_bare_replies_parse() {
    let bare = r#"{"justification": "partner is clean", "donor_action": "cooperate"}"#;
    let fenced = "Sure.\n```json\n{\"justification\": \"partner defected\", \"donor_action\": \"Defect\"}\n```\n";
    assert_eq!(
        parse_decision(bare, DecisionSchema::DonorAction)
            .unwrap()
            .value,
        ParsedValue::Binary(BinaryAction::Cooperate)
    );
    assert_eq!(
        parse_decision(fenced, DecisionSchema::DonorAction)
            .unwrap()
            .value,
        ParsedValue::Binary(BinaryAction::Defect)
    );
    let tone = r#"{"justification":"j","tone":"Criticism","gossip":"they kept it all"}"#;
    assert_eq!(
        parse_decision(tone, DecisionSchema::ToneGossip)
            .unwrap()
            .value,
        ParsedValue::Toned {
            tone: Tone::Criticism,
            text: "they kept it all".into()
        }
    );
    let amount = r#"{"justification":"j","investor_action":"2.5"}"#;
    assert_eq!(
        parse_decision(amount, DecisionSchema::InvestorAction { max: 10.0 })
            .unwrap()
            .value,
        ParsedValue::Amount(2.5)
    );
    let buyer = r#"{"justification":"j","buyer_action":"none"}"#;
    assert_eq!(
        parse_decision(buyer, DecisionSchema::BuyerAction)
            .unwrap()
            .value,
        ParsedValue::Purchase(Purchase::None)
    );
}

#[test]
fn violations_are_rejected() {
    let cases: &[(&str, DecisionSchema)] = &[
        (
            r#"{"justification":"j","donor_action":"maybe"}"#,
            DecisionSchema::DonorAction,
        ),
        (
            r#"{"justification":"j","player_action":"cooperate"}"#,
            DecisionSchema::PlayerAction,
        ),
        (
            r#"{"justification":"j","tone":"angry","gossip":"x"}"#,
            DecisionSchema::ToneGossip,
        ),
        (
            r#"{"justification":"j","signal":2}"#,
            DecisionSchema::BinarySignal,
        ),
        (
            r#"{"justification":"j","seller_action":"M"}"#,
            DecisionSchema::SellerAction,
        ),
        (
            r#"{"donor_action":"cooperate"}"#,
            DecisionSchema::DonorAction,
        ),
    ];
    for (text, schema) in cases {
        assert!(
            matches!(
                parse_decision(text, *schema),
                Err(LlmError::SchemaViolation(_))
            ),
            "{text}"
        );
    }
    let over = r#"{"justification":"j","responder_action":31}"#;
    assert!(matches!(
        parse_decision(over, DecisionSchema::ResponderAction { max: 30.0 }),
        Err(LlmError::OutOfRange(_))
    ));
    let negative = r#"{"justification":"j","investor_action":-1}"#;
    assert!(matches!(
        parse_decision(negative, DecisionSchema::InvestorAction { max: 5.0 }),
        Err(LlmError::OutOfRange(_))
    ));
    assert!(matches!(
        parse_decision("no json here", DecisionSchema::DonorAction),
        Err(LlmError::Malformed)
    ));
}

#[test]
fn scripted_client_cycles() {
    let mut c = ScriptedClient::new(vec!["a".into(), "b".into()]);
    let got: Vec<String> = (0..3).map(|_| c.complete("s", "u").unwrap()).collect();
    assert_eq!(got, ["a", "b", "a"]);
}

fn decision() -> impl Strategy<Value = (ParsedDecision, DecisionSchema)> {
    let text = "[a-zA-Z ,.']{0,40}";
    let binary = prop_oneof![Just(BinaryAction::Cooperate), Just(BinaryAction::Defect)];
    let value = prop_oneof![
        binary
            .clone()
            .prop_map(|a| (ParsedValue::Binary(a), DecisionSchema::DonorAction)),
        binary
            .clone()
            .prop_map(|a| (ParsedValue::Binary(a), DecisionSchema::PlayerAction)),
        (0.0f64..100.0).prop_map(|x| (
            ParsedValue::Amount(x),
            DecisionSchema::InvestorAction { max: 100.0 }
        )),
        (0.0f64..100.0).prop_map(|x| (
            ParsedValue::Amount(x),
            DecisionSchema::ResponderAction { max: 100.0 }
        )),
        prop_oneof![Just(Quality::High), Just(Quality::Low)]
            .prop_map(|q| (ParsedValue::Quality(q), DecisionSchema::SellerAction)),
        prop_oneof![
            Just(Purchase::Customized),
            Just(Purchase::Standardized),
            Just(Purchase::None)
        ]
        .prop_map(|p| (ParsedValue::Purchase(p), DecisionSchema::BuyerAction)),
        (0usize..5, text).prop_map(|(k, t)| (
            ParsedValue::Toned {
                tone: Tone::ALL[k],
                text: t
            },
            DecisionSchema::ToneGossip
        )),
        (0u8..2).prop_map(|b| (ParsedValue::Signal(b), DecisionSchema::BinarySignal)),
        (binary, text).prop_map(|(a, t)| (
            ParsedValue::SelfReport {
                claimed: a,
                text: t
            },
            DecisionSchema::SelfReport
        )),
    ];
    (text, value).prop_map(|(justification, (value, schema))| {
        (
            ParsedDecision {
                justification,
                value,
            },
            schema,
        )
    })
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity((d, schema) in decision()) {
        let text = serialize_decision(&d, schema);
        prop_assert_eq!(parse_decision(&text, schema).unwrap(), d.clone());
        let fenced = format!("Here you go:\n```json\n{text}\n```");
        prop_assert_eq!(parse_decision(&fenced, schema).unwrap(), d);
    }
}
