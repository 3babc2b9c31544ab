#pragma once
namespace comprox { int cli_run(int argc, char** argv); }
