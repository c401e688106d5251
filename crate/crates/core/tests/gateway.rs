use std::time::Duration;

use aop_smart_core::llm::{
    ApiKey, ChatMessage, GatewayError, GatewayErrorKind, LlmClient, LlmConfig, MockBackend,
    MockReply, MockRule, MockScript, Role,
};

const KEY: &str = "sk-test-4f1c9a7e";

async fn backend(script: MockScript) -> (MockBackend, LlmConfig) {
    let mock = MockBackend::start(script).await.unwrap();
    let config = LlmConfig::new(mock.endpoint().as_str(), ApiKey::new(KEY), "mock-a").unwrap();
    (mock, config)
}

#[tokio::test]
async fn lists_models() {
    let (_mock, config) = backend(MockScript::default()).await;
    let models = LlmClient::new().fetch_models(&config).await.unwrap();
    assert_eq!(models, vec!["mock-a", "mock-b"]);
}

#[tokio::test]
async fn wrong_key_is_a_credential_error() {
    let (mock, config) = backend(MockScript::default().requiring_key("the-right-key")).await;
    let client = LlmClient::new();
    let err = client.fetch_models(&config).await.unwrap_err();
    assert_eq!(err.kind(), GatewayErrorKind::Credential);
    let err = client
        .chat_complete(&config, &[ChatMessage::user("hi")])
        .await
        .unwrap_err();
    assert!(matches!(err, GatewayError::Credential { status: 401 }));
    assert!(!err.to_string().contains(KEY));
    assert!(!format!("{err:?}").contains(KEY));
    assert!(mock.requests().iter().all(|r| !r.authorized));
}

#[tokio::test]
async fn malformed_models_body_is_a_protocol_error() {
    let script = MockScript {
        malformed_models: true,
        ..MockScript::default()
    };
    let (_mock, config) = backend(script).await;
    let err = LlmClient::new().fetch_models(&config).await.unwrap_err();
    assert_eq!(err.kind(), GatewayErrorKind::Protocol);
    assert!(!err.to_string().is_empty());
}

#[tokio::test]
async fn malformed_completion_is_a_protocol_error() {
    let (_mock, config) = backend(MockScript::default().with_default(MockReply::Malformed)).await;
    let err = LlmClient::new()
        .chat_complete(&config, &[ChatMessage::user("x")])
        .await
        .unwrap_err();
    assert_eq!(err.kind(), GatewayErrorKind::Protocol);
}

#[tokio::test]
async fn default_reply_is_pong() {
    let (mock, config) = backend(MockScript::default()).await;
    let ex = LlmClient::new()
        .chat_complete(
            &config,
            &[ChatMessage::system("s"), ChatMessage::user("ping")],
        )
        .await
        .unwrap();
    assert_eq!(ex.response_text, "PONG");
    assert_eq!(ex.request_messages.len(), 2);
    assert_eq!(mock.chat_requests().len(), 1);
    assert_eq!(mock.chat_requests()[0].messages[0].role, Role::System);
}

#[tokio::test]
async fn first_matching_rule_wins() {
    let script = MockScript::default()
        .with_rule(MockRule::all_of(
            ["KE Detail", "fibrosis"],
            MockReply::text("both"),
        ))
        .with_rule(MockRule::contains("KE Detail", MockReply::text("grounded")));
    let (_mock, config) = backend(script).await;
    let client = LlmClient::new();
    let ask = |text: &'static str| {
        let client = client.clone();
        let config = config.clone();
        async move {
            client
                .chat_complete(&config, &[ChatMessage::user(text)])
                .await
                .unwrap()
                .response_text
        }
    };
    assert_eq!(ask("## KE Detail about fibrosis").await, "both");
    assert_eq!(ask("## KE Detail only").await, "grounded");
    assert_eq!(ask("nothing relevant").await, "PONG");
}

#[tokio::test]
async fn request_parameters_reach_the_backend() {
    let (mock, config) = backend(MockScript::default()).await;
    let config = config.with_max_output_tokens(321).unwrap();
    LlmClient::new()
        .chat_complete(&config, &[ChatMessage::user("x")])
        .await
        .unwrap();
    let req = &mock.chat_requests()[0];
    assert_eq!(req.temperature, Some(0.0));
    assert_eq!(req.max_tokens, Some(321));
    assert_eq!(req.model.as_deref(), Some("mock-a"));
    assert!(req.authorized);
    assert_eq!(req.body.as_ref().unwrap()["stream"], false);
}

#[tokio::test]
async fn overload_statuses_are_retryable() {
    for status in [429u16, 503] {
        let (_mock, config) =
            backend(MockScript::default().with_default(MockReply::Status(status))).await;
        let err = LlmClient::new()
            .chat_complete(&config, &[ChatMessage::user("x")])
            .await
            .unwrap_err();
        assert!(err.is_retryable(), "{status}");
        assert_eq!(err.kind(), GatewayErrorKind::RetryableOverload);
    }
    let (_mock, config) = backend(MockScript::default().with_default(MockReply::Status(400))).await;
    let err = LlmClient::new()
        .chat_complete(&config, &[ChatMessage::user("x")])
        .await
        .unwrap_err();
    assert_eq!(err.kind(), GatewayErrorKind::Protocol);
}

#[tokio::test]
async fn unreachable_endpoint_is_a_network_error() {
    let mock = MockBackend::start(MockScript::default()).await.unwrap();
    let endpoint = mock.endpoint();
    mock.shutdown().await;
    let config = LlmConfig::new(endpoint.as_str(), ApiKey::new(KEY), "m")
        .unwrap()
        .with_timeout(Duration::from_secs(2));
    let err = LlmClient::new().fetch_models(&config).await.unwrap_err();
    assert_eq!(err.kind(), GatewayErrorKind::Network);
    assert!(!err.to_string().contains(KEY));
}

#[tokio::test]
async fn transcripts_are_reproducible() {
    let mut transcripts = Vec::new();
    for _ in 0..2 {
        let (mock, config) = backend(
            MockScript::default().with_rule(MockRule::contains("a", MockReply::text("alpha"))),
        )
        .await;
        let client = LlmClient::new();
        for text in ["a", "b", "ab"] {
            client
                .chat_complete(&config, &[ChatMessage::user(text)])
                .await
                .unwrap();
        }
        transcripts.push(mock.requests());
    }
    assert_eq!(transcripts[0], transcripts[1]);
}

#[test]
fn config_validation() {
    let key = ApiKey::new(KEY);
    assert!(LlmConfig::new("ftp://x", key.clone(), "m").is_err());
    assert!(LlmConfig::new("not a url", key.clone(), "m").is_err());
    let c = LlmConfig::new("https://api.example.com/v1", key.clone(), "m").unwrap();
    assert!(c.clone().with_temperature(2.5).is_err());
    assert!(c.clone().with_temperature(-0.1).is_err());
    assert!(c.clone().with_max_output_tokens(0).is_err());
    assert!(!format!("{c:?}").contains(KEY));
    assert!(!format!("{key:?}").contains(KEY));
}
