#pragma once

#define SLELAB_VERSION "0.1.0"
