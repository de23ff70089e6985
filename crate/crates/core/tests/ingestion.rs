mod common;

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_clients_produce_intact_sorted_logs() {
    let detail = common::ingestion_async(10, 1000).await.unwrap_or_else(|e| panic!("{e}"));
    println!("{detail}");
}
