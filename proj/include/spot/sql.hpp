#pragma once

#include "spot/sql/backend.hpp"
#include "spot/sql/compiler.hpp"
#include "spot/sql/dialect.hpp"
#include "spot/sql/sqlite.hpp"
