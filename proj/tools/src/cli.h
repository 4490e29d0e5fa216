#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vqc/chat.h"
#include "vqc/embedding.h"

namespace vqc::cli {

// Runs one command line (without the program name). Returns the process
// exit status: 0 on success, 1 on a runtime failure (one line
// "error: <code>: <message>" on err), 2 on a usage error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Client names: "echo", "constant:<reply>" ("\n" escapes allowed),
// "http:<model>" (endpoint and key from VQC_CHAT_URL / VQC_CHAT_KEY).
std::unique_ptr<ChatClient> make_client(const std::string& name);

// Provider names: "hash", "hash:<dim>", "http:<model>" (endpoint and key
// from VQC_EMBED_URL / VQC_EMBED_KEY).
std::shared_ptr<EmbeddingProvider> make_provider(const std::string& name);

// Flat config: one key=value per line, '#' comments, blank lines ignored.
// Keys are long flag names without the dashes.
std::map<std::string, std::string> parse_config(const std::string& text);

}  // namespace vqc::cli
