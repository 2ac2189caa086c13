# Built-in two-dimensional example systems shipped as spec files.

EX5_1 = """\
# Two-dimensional impulsive neutral system with discrete and distributed
# delays; diagonal trigonometric neutral term, saturating discrete-delay
# nonlinearity and a sine distributed-delay kernel.

[meta]
name = ex5_1
reference_rho = 0.7925

[system]
n = 2

[matrix.Q]
1 1 = "0.1*sin(t)"
2 2 = "0.1*cos(t)"

[matrix.C]
1 1 = "-16"
1 2 = "2.5"
2 1 = "1.5"
2 2 = "-16"

[matrix.B]
1 1 = "0.3/(1+exp(-t))"
2 2 = "0.4/(1+exp(-t))"

[matrix.W]
1 1 = "0.2"
2 2 = "0.5"

[delays]
tau = "0.2"
delta = "0.2"
r = "0.2"
mu = 0.2

[nonlinearities]
g1 = "satlin(x)"
g2 = "satlin(x)"
h1 = "sin(x)"
h2 = "sin(x)"
beta = 1 1
gamma = 1 1

[auxiliary]
v1 = "16"
v2 = "16"
eta = 16 16

[impulses]
generator = "t_{k-1} + 0.5*k"
map1 = "arctan(0.4*x)"
map2 = "arctan(0.4*x)"
p_ik = 0.4 0.4
p_row = 0.8 0.8

[history]
phi1 = "cos(t)"
phi2 = "sin(t)"
lo = -1

[run]
horizon = 10
step = 0.001
"""

EX5_2 = """\
# Two-dimensional impulsive neutral system with oscillating neutral term,
# tanh and linear nonlinearities, and time-varying |sin| delays.

[meta]
name = ex5_2
reference_rho = 0.8832

[system]
n = 2

[matrix.Q]
1 1 = "0.125*sin(t)^3"
2 2 = "0.2*sin(t)"

[matrix.C]
1 1 = "-18"
1 2 = "-0.5773502691896258"
2 1 = "0.5773502691896258"
2 2 = "-20"

[matrix.A]
1 1 = "0.01/(1+t)"
2 2 = "0.01*exp(-t)"

[matrix.B]
1 1 = "0.999*cos(t)*sin(2*t)"
2 2 = "0.999*cos(t)^2"

[delays]
tau = "0.2*abs(sin(t))"
delta = "0.2*abs(sin(t))"
r = "0.2*abs(sin(t))"
mu = 0.2

[nonlinearities]
f1 = "0.2*tanh(2*x)"
f2 = "0.2*tanh(2*x)"
g1 = "0.6*x"
g2 = "0.6*x"
alpha = 0.4 0.4
beta = 0.6 0.6

[auxiliary]
v1 = "20"
v2 = "20"
eta = 20 20

[impulses]
generator = "t_{k-1} + 0.5*k"
map1 = "arctan(0.4*x)"
map2 = "arctan(0.4*x)"
p_ik = 0.4 0.4
p_row = 0.8 0.8

[history]
phi1 = "0.575*t-0.5"
phi2 = "0.7*cos(t)"
lo = -1

[run]
horizon = 10
step = 0.001
"""

BUILTIN = {"ex5_1": EX5_1, "ex5_2": EX5_2}
