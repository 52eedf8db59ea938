#include "defence/log.hpp"

#include <iostream>
#include <mutex>

namespace defence {

namespace {

std::mutex sink_mutex;
bool verbose_enabled = false;

void stderr_sink(LogLevel level, const std::string& message)
{
    if (level == LogLevel::info && !verbose_enabled)
        return;
    std::cerr << (level == LogLevel::warning ? "warning: " : "") << message << '\n';
}

LogSink& current_sink()
{
    static LogSink sink = stderr_sink;
    return sink;
}

void emit(LogLevel level, const std::string& message)
{
    std::lock_guard lock(sink_mutex);
    if (current_sink())
        current_sink()(level, message);
}

} // namespace

LogSink set_log_sink(LogSink sink)
{
    std::lock_guard lock(sink_mutex);
    LogSink previous = std::move(current_sink());
    current_sink() = sink ? std::move(sink) : LogSink(stderr_sink);
    return previous;
}

void set_verbose(bool verbose)
{
    std::lock_guard lock(sink_mutex);
    verbose_enabled = verbose;
}

void log_info(const std::string& message) { emit(LogLevel::info, message); }
void log_warning(const std::string& message) { emit(LogLevel::warning, message); }

} // namespace defence
