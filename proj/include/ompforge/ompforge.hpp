#pragma once

#include "ompforge/error.hpp"
#include "ompforge/pragma.hpp"
#include "ompforge/lexer.hpp"
#include "ompforge/jsonl.hpp"
#include "ompforge/corpus.hpp"
#include "ompforge/backend.hpp"
#include "ompforge/ngram.hpp"
#include "ompforge/remote.hpp"
#include "ompforge/chain.hpp"
#include "ompforge/eval.hpp"
#include "ompforge/config.hpp"
