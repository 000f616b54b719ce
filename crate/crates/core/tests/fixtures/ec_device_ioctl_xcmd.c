long ec_device_ioctl_xcmd(struct cros_ec_dev *ec, void *arg)
{
	if (copy_from_user(&u_cmd, arg, sizeof(u_cmd)))
		return -EFAULT;
	s_cmd = kmalloc(sizeof(*s_cmd) + u_cmd.outsize, GFP_KERNEL);
	if (copy_from_user(s_cmd, arg, sizeof(*s_cmd) + u_cmd.outsize))
		goto exit;
	ret = cros_ec_cmd_xfer(ec->ec_dev, s_cmd);
	if (ret < 0)
		goto exit;
	ret = copy_to_user(arg, s_cmd, sizeof(*s_cmd) + u_cmd.insize);
exit:
	kfree(s_cmd);
	return ret;
}
