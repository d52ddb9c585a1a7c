// Freezes the golden /v1 transcript from a session against the reference
// server. Usage: make_transcript <out.jsonl>
#include <fstream>
#include <iostream>

#include "forge/reference_server.hpp"
#include "transcript_session.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_transcript <out.jsonl>\n";
    return 2;
  }
  forge::ReferenceServer server(transcript::tokenizer(), forge::NgramConfig{});
  server.start();
  auto http = std::make_shared<forge::HttpTransport>(transcript::config(server.base_url()));
  auto rec = std::make_shared<forge::RecordingTransport>(http);
  const auto seen = transcript::run(rec, server.base_url());
  std::ofstream out(argv[1]);
  for (const auto& e : rec->transcript()) out << e.dump() << '\n';
  std::cout << seen.dump(2) << '\n';
  return 0;
}
